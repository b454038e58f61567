"""Exception hierarchy shared by all bemllm modules."""

from __future__ import annotations


class BemllmError(Exception):
    """Root of every error raised on purpose by this package."""


# --- IDD -----------------------------------------------------------------


class IddError(BemllmError):
    pass


class EmptyInput(IddError):
    pass


class MalformedHeader(IddError):
    def __init__(self, line_no: int, text: str):
        super().__init__(f"line {line_no}: class header without ',' or ';' terminator: {text!r}")
        self.line_no = line_no
        self.text = text


class DanglingDirective(IddError):
    def __init__(self, line_no: int, directive: str):
        super().__init__(f"line {line_no}: directive \\{directive} appears before any field")
        self.line_no = line_no
        self.directive = directive


class UnknownClass(BemllmError, KeyError):
    def __init__(self, class_name: str, suggestion: str | None = None):
        msg = f"unknown object class {class_name!r}"
        if suggestion:
            msg += f" (did you mean {suggestion!r}?)"
        super().__init__(msg)
        self.class_name = class_name
        self.suggestion = suggestion

    def __str__(self) -> str:
        return self.args[0]


# --- IDF -----------------------------------------------------------------


class IdfError(BemllmError):
    pass


class UnterminatedObject(IdfError):
    def __init__(self, line_no: int, class_name: str):
        super().__init__(f"object {class_name!r} starting at line {line_no} has no ';' terminator")
        self.line_no = line_no
        self.class_name = class_name


class StrayText(IdfError):
    def __init__(self, line_no: int, text: str):
        super().__init__(f"line {line_no}: text outside any object field: {text!r}")
        self.line_no = line_no
        self.text = text


class TargetNotFound(IdfError):
    def __init__(self, class_name: str, name: str):
        super().__init__(f"no {class_name} object named {name!r}")
        self.class_name = class_name
        self.name = name


class AmbiguousTarget(IdfError):
    def __init__(self, class_name: str, name: str, count: int):
        super().__init__(f"{count} {class_name} objects named {name!r}")
        self.class_name = class_name
        self.name = name
        self.count = count


# --- object forging --------------------------------------------------------


class AssignmentError(BemllmError):
    pass


class UnknownField(AssignmentError):
    pass


class AssignmentOutOfBounds(AssignmentError):
    pass


class ChoiceMismatch(AssignmentError):
    pass


class NegativeMagnitude(BemllmError, ValueError):
    pass


# --- LLM gateway -----------------------------------------------------------


class LlmError(BemllmError):
    pass


class TransportError(LlmError):
    pass


class AuthError(LlmError):
    pass


class RateLimited(TransportError):
    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class ReplayMiss(LlmError):
    def __init__(self, tag: str, digest: str):
        super().__init__(f"no recorded response for request {tag!r} (digest {digest[:12]})")
        self.tag = tag
        self.digest = digest


class DimensionMismatch(LlmError):
    pass


class EmbeddingFailed(LlmError):
    pass


class EmbedderMismatch(LlmError):
    pass


# --- agents ----------------------------------------------------------------


class AgentError(BemllmError):
    pass


class EmptyExcerpt(AgentError):
    pass


class EmptyRequest(AgentError):
    pass


class EmptyDescription(AgentError):
    pass


class EmptyErrors(AgentError):
    pass


class EmptyIdf(AgentError):
    pass


class ResponseParseError(AgentError):
    """A model response could not be read into the expected structure."""


class NoTableFound(ResponseParseError):
    pass


class AllRowsInvalid(ResponseParseError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("every extraction row was rejected: " + "; ".join(diagnostics))
        self.diagnostics = diagnostics


class MissingObjectBlock(ResponseParseError):
    pass


class MissingTupleBlock(ResponseParseError):
    pass


class CountExceeded(ResponseParseError):
    pass


class TupleObjectMismatch(ResponseParseError):
    pass


class NoPlanFound(ResponseParseError):
    pass


class NoObjectFound(ResponseParseError):
    pass


# --- simulator -------------------------------------------------------------


class SimulatorError(BemllmError):
    pass


class ExecutableNotFound(SimulatorError):
    pass


class WeatherFileMissing(SimulatorError):
    pass


class SimulatorCrashed(SimulatorError):
    pass


# --- pipeline --------------------------------------------------------------


class PipelineError(BemllmError):
    pass


class ExtractionFailed(PipelineError):
    pass


class GenerationFailed(PipelineError):
    def __init__(self, item, reasons: list[str]):
        super().__init__(
            f"could not generate {item.object_type} {item.object_name!r}: " + "; ".join(reasons)
        )
        self.item = item
        self.reasons = reasons


class RepairExhausted(PipelineError):
    pass


class RepairParseFailed(PipelineError):
    pass


class PlanFailed(PipelineError):
    pass


# --- output visualisation -----------------------------------------------------


class OutputError(BemllmError):
    pass


class HeaderMissing(OutputError):
    pass


class RaggedRow(OutputError):
    def __init__(self, row_no: int, expected: int, found: int):
        super().__init__(f"row {row_no}: expected {expected} cells, found {found}")
        self.row_no = row_no


class UnparseableTimestamp(OutputError):
    def __init__(self, row_no: int, text: str):
        super().__init__(f"row {row_no}: cannot parse timestamp {text!r}")
        self.row_no = row_no
        self.text = text


class EmptyWindow(OutputError):
    pass


class NoEnduseColumns(OutputError):
    pass


class NoWeatherColumns(OutputError):
    pass


# --- cli -----------------------------------------------------------------------


class ConfigError(BemllmError):
    pass


class UsageError(BemllmError):
    pass
