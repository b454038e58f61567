"""Run EnergyPlus (or a rule-driven mock) and read its ``.err`` diagnostics."""

from __future__ import annotations

import enum
import logging
import os
import re
import shutil
import subprocess
import tempfile
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

from .errors import ExecutableNotFound, SimulatorCrashed, WeatherFileMissing
from .idd import IddSchema, normalize_name
from .idf import IdfDocument, object_key, reference_audit, serialize, trim_trailing_blanks

log = logging.getLogger(__name__)


class Severity(enum.IntEnum):
    Warning = 1
    Severe = 2
    Fatal = 3


@dataclass(frozen=True)
class ErrEntry:
    severity: Severity
    message: str
    referenced_object: tuple[str, str] | None = None


@dataclass
class SimulationReport:
    completed: bool
    entries: list[ErrEntry]
    raw_err: str
    skipped_lines: int = 0
    exit_code: int | None = None

    def count(self, severity: Severity) -> int:
        return sum(1 for e in self.entries if e.severity == severity)

    @property
    def severe_or_fatal(self) -> int:
        return sum(1 for e in self.entries if e.severity >= Severity.Severe)

    @property
    def clean(self) -> bool:
        return self.completed and self.severe_or_fatal == 0

    def summary(self) -> str:
        return (
            f"completed={self.completed} warnings={self.count(Severity.Warning)} "
            f"severe={self.count(Severity.Severe)} fatal={self.count(Severity.Fatal)}"
        )


# ---------------------------------------------------------------------------
# .err parsing

_MARKER = re.compile(r"^\s*\*\*\s*(Warning|Severe|Fatal)\s*\*\*\s?(.*)$")
_CONTINUATION = re.compile(r"^\s*\*\*\s+~~~\s+\*\*\s?(.*)$")
_COMPLETED = "EnergyPlus Completed Successfully"
_QUOTED_REF = re.compile(r"\b([A-Za-z][A-Za-z0-9]*(?::[A-Za-z0-9]+)*)\s*=\s*\"([^\"]+)\"")
# EnergyPlus also writes `Exterior:Lights = EXTLIGHTS`; only accept colon class names there
_BARE_REF = re.compile(r"\b([A-Za-z][A-Za-z0-9]*(?::[A-Za-z0-9]+)+)\s*=\s*([^,\"]+?)\s*(?:,|$)")
_SINGLE_WORD_CLASSES = {"people", "lights", "zone", "construction", "material", "building", "space"}


_WORD_REF = re.compile(r"\b([A-Z][A-Za-z]+)\s*=\s*([^,\"]+?)\s*(?:,|$)")


def _reference(text: str, schema: IddSchema | None = None) -> tuple[str, str] | None:
    """First ``Class="NAME"`` or ``Class = NAME`` mention, restricted to schema classes if given."""
    for line in text.splitlines():
        for pattern in (_QUOTED_REF, _BARE_REF, _WORD_REF):
            for m in pattern.finditer(line):
                cls = m.group(1)
                if schema is not None:
                    od = schema.get(cls)
                    if od is None:
                        continue
                    cls = od.class_name
                elif pattern is _WORD_REF and cls.lower() not in _SINGLE_WORD_CLASSES:
                    continue
                return cls, m.group(2).strip()
    return None


def parse_err_report(raw: str, schema: IddSchema | None = None) -> tuple[list[ErrEntry], int]:
    """Entries plus the number of non-blank lines that were neither markers nor continuations."""
    entries: list[ErrEntry] = []
    open_sev: Severity | None = None
    open_lines: list[str] = []
    skipped = 0

    def close():
        nonlocal open_sev, open_lines
        if open_sev is not None:
            msg = "\n".join(open_lines).rstrip()
            entries.append(ErrEntry(open_sev, msg, _reference(msg, schema)))
        open_sev, open_lines = None, []

    for line in raw.splitlines():
        m = _MARKER.match(line)
        if m:
            close()
            open_sev = Severity[m.group(1)]
            open_lines = [m.group(2).rstrip()]
            continue
        c = _CONTINUATION.match(line)
        if c and open_sev is not None:
            open_lines.append(c.group(1).rstrip())
            continue
        close()
        if line.strip():
            skipped += 1
    close()
    return entries, skipped


def parse_err(raw: str, schema: IddSchema | None = None) -> list[ErrEntry]:
    return parse_err_report(raw, schema)[0]


def severe_fatal_digest(entries: Sequence[ErrEntry]) -> str:
    return "\n\n".join(
        f"** {e.severity.name} ** {e.message}" for e in entries if e.severity >= Severity.Severe
    )


def report_from_err(raw: str, exit_code: int | None = None, schema: IddSchema | None = None) -> SimulationReport:
    entries, skipped = parse_err_report(raw, schema)
    has_fatal = any(e.severity == Severity.Fatal for e in entries)
    completed = _COMPLETED in raw and not has_fatal and (exit_code in (None, 0))
    return SimulationReport(completed, entries, raw, skipped, exit_code)


# ---------------------------------------------------------------------------
# mock runner

_GETTERS = {
    "people": "GetInternalHeatGains",
    "lights": "GetInternalHeatGains",
    "electricequipment": "GetInternalHeatGains",
    "exterior:lights": "GetExteriorEnergyUseInput",
    "zoneinfiltration:designflowrate": "GetSimpleAirModelInputs",
    "construction": "GetConstructData",
    "buildingsurface:detailed": "GetHTSurfaceData",
    "fenestrationsurface:detailed": "GetHTSubSurfaceData",
    "schedule:compact": "ProcessScheduleInput",
}

PREDICATES = ("unknown-class", "duplicate-name", "placeholder", "dangling-reference", "missing-required")


@dataclass(frozen=True)
class MockRule:
    predicate: str
    severity: Severity
    lines: tuple[str, ...]


def parse_rules(text: str) -> list[MockRule]:
    """Read a mock rule table.

    One rule per line: ``<predicate> <Severity> <first line> | <continuation> | ...``.
    ``#`` starts a comment line.  Message lines may use ``{getter}``, ``{class}``,
    ``{NAME}``, ``{field}`` and ``{value}``.
    """
    rules = []
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 2)
        if len(parts) < 3:
            raise ValueError(f"rule line {n}: expected '<predicate> <severity> <message>'")
        pred, sev, msg = parts
        if pred not in PREDICATES:
            raise ValueError(f"rule line {n}: unknown predicate {pred!r}")
        try:
            severity = Severity[sev.capitalize()]
        except KeyError:
            raise ValueError(f"rule line {n}: unknown severity {sev!r}") from None
        rules.append(MockRule(pred, severity, tuple(p.strip() for p in msg.split("|"))))
    return rules


@lru_cache(maxsize=1)
def default_rules() -> tuple[MockRule, ...]:
    text = resources.files("bemllm.data").joinpath("mock_rules.txt").read_text(encoding="utf-8")
    return tuple(parse_rules(text))


@dataclass(frozen=True)
class _Finding:
    predicate: str
    class_name: str
    name: str
    field: str = ""
    value: str = ""


def _findings(doc: IdfDocument, schema: IddSchema) -> list[_Finding]:
    out: list[_Finding] = []
    counts = Counter(object_key(o, schema) for o in doc.objects if schema.get(o.class_name) is not None)
    reported_dupes = set()
    for obj in doc.objects:
        od = schema.get(obj.class_name)
        if od is None:
            out.append(_Finding("unknown-class", obj.class_name, obj.name))
            continue
        key = object_key(obj, schema)
        if key[1] and counts[key] > 1 and key not in reported_dupes:
            reported_dupes.add(key)
            out.append(_Finding("duplicate-name", od.class_name, obj.name))
    audit = reference_audit(doc, schema)
    for p in audit.placeholders:
        obj = doc.objects[p.object_index]
        od = schema.get(obj.class_name)
        fd = od.field_at(p.ordinal) if od else None
        out.append(_Finding("placeholder", obj.class_name, obj.name, fd.name if fd else f"Field {p.ordinal}", p.token))
    for d in audit.dangling:
        obj = doc.objects[d.object_index]
        fd = schema.get(obj.class_name).field_at(d.ordinal)
        out.append(_Finding("dangling-reference", obj.class_name, obj.name, fd.name, d.name))
    for obj in doc.objects:
        od = schema.get(obj.class_name)
        if od is None:
            continue
        for fd in od.fields:
            if fd.required and obj.value(fd.ordinal).is_blank:
                out.append(_Finding("missing-required", od.class_name, obj.name, fd.name))
    return out


class MockRunner:
    """Deterministic stand-in for EnergyPlus.

    Each document problem found by the rule predicates becomes one ``.err``
    entry; if any Severe entry is produced a Fatal termination follows, as
    EnergyPlus does when input processing fails.
    """

    version = "23.2.0-mock"

    def __init__(self, schema: IddSchema, rules: Sequence[MockRule] | None = None):
        self.schema = schema
        self.rules = list(rules) if rules is not None else list(default_rules())

    def render_err(self, doc: IdfDocument) -> str:
        by_pred: dict[str, list[MockRule]] = {}
        for r in self.rules:
            by_pred.setdefault(r.predicate, []).append(r)
        lines = [f"Program Version,EnergyPlus, Version {self.version}, YMD=mock,"]
        counts = Counter()
        for f in _findings(doc, self.schema):
            for rule in by_pred.get(f.predicate, []):
                values = {
                    "getter": _GETTERS.get(normalize_name(f.class_name), "GetInput"),
                    "class": f.class_name,
                    "NAME": f.name.upper(),
                    "field": f.field,
                    "value": f.value.upper(),
                }
                first, *rest = (ln.format(**values) for ln in rule.lines)
                lines.append(f"   {_marker(rule.severity)} {first}")
                lines.extend(f"   **   ~~~   ** {ln}" for ln in rest)
                counts[rule.severity] += 1
        if counts[Severity.Severe] or counts[Severity.Fatal]:
            lines.append(f"   {_marker(Severity.Fatal)} GetInput: Errors found in input.  Program terminates.")
            lines.append(
                f"   ************* EnergyPlus Terminated--Fatal Error Detected. {counts[Severity.Warning]} Warning; "
                f"{counts[Severity.Severe]} Severe Errors; Elapsed Time=00hr 00min  0.00sec"
            )
        else:
            lines.append(
                f"   ************* EnergyPlus Completed Successfully-- {counts[Severity.Warning]} Warning; "
                "0 Severe Errors; Elapsed Time=00hr 00min  0.00sec"
            )
        return "\n".join(lines) + "\n"

    def run(self, doc: IdfDocument, weather_path: str | None = None) -> SimulationReport:
        return report_from_err(self.render_err(doc), schema=self.schema)


def _marker(sev: Severity) -> str:
    return {Severity.Warning: "** Warning **", Severity.Severe: "** Severe  **", Severity.Fatal: "**  Fatal  **"}[sev]


# ---------------------------------------------------------------------------
# external runner


class ExternalRunner:
    """Runs a real simulator in a fresh scratch directory per call.

    ``command`` is the executable (or argv prefix), invoked as
    ``<command> [-D] [-x] -d <scratch> [-w <weather>] <scratch>/in.idf``.
    A run that exits non-zero but leaves an ``eplusout.err`` is reported, not
    raised: EnergyPlus sometimes crashes after writing its diagnosis.
    """

    def __init__(
        self,
        command: str | Sequence[str],
        design_day_only: bool = False,
        expand_objects: bool = False,
        timeout: float = 600.0,
        keep_dir: str | None = None,
        schema: IddSchema | None = None,
    ):
        self.schema = schema
        self.command = [command] if isinstance(command, str) else list(command)
        self.design_day_only = design_day_only
        self.expand_objects = expand_objects
        self.timeout = timeout
        self.keep_dir = keep_dir
        exe = self.command[0]
        if shutil.which(exe) is None and not (os.path.isfile(exe) and os.access(exe, os.X_OK)):
            raise ExecutableNotFound(f"simulator executable not found: {exe}")

    def run(self, doc: IdfDocument, weather_path: str | None = None) -> SimulationReport:
        if weather_path is not None and not os.path.isfile(weather_path):
            raise WeatherFileMissing(f"weather file not found: {weather_path}")
        if weather_path is None and not self.design_day_only:
            raise WeatherFileMissing("a weather file is required unless running design days only")
        with tempfile.TemporaryDirectory(prefix="bemllm-sim-") as scratch:
            idf_path = Path(scratch) / "in.idf"
            if self.schema is not None:
                doc = trim_trailing_blanks(doc, self.schema)
            idf_path.write_text(serialize(doc), encoding="utf-8")
            argv = list(self.command)
            if self.design_day_only:
                argv.append("-D")
            if self.expand_objects:
                argv.append("-x")
            argv += ["-d", scratch]
            if weather_path is not None:
                argv += ["-w", os.path.abspath(weather_path)]
            argv.append(str(idf_path))
            log.info("running %s", " ".join(argv))
            try:
                proc = subprocess.run(argv, cwd=scratch, capture_output=True, text=True, timeout=self.timeout)
            except FileNotFoundError as exc:
                raise ExecutableNotFound(str(exc)) from exc
            err_path = Path(scratch) / "eplusout.err"
            if self.keep_dir:
                shutil.copytree(scratch, self.keep_dir, dirs_exist_ok=True)
            if not err_path.exists():
                if proc.returncode != 0:
                    raise SimulatorCrashed(
                        f"simulator exited with {proc.returncode} and wrote no .err: {proc.stderr[-500:]}"
                    )
                raise SimulatorCrashed("simulator wrote no .err file")
            raw = err_path.read_text(encoding="utf-8", errors="replace")
        return report_from_err(raw, proc.returncode, self.schema)


def run_simulation(runner, idf: IdfDocument, weather_path: str | None = None) -> SimulationReport:
    return runner.run(idf, weather_path)
