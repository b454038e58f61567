"""Command-line entry point: ``bemllm <subcommand> ...``.

Settings come from built-in defaults, then an INI file (``--config``), then
flags; a flag always wins.  Credentials are never read from the file: the
``[llm] credential_env`` setting names the environment variable to use.

Exit codes: 0 success, 1 domain failure (violations, unresolved errors, a run
that did not end Clean), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import gzip
import json
import logging
import re
import sys
from dataclasses import dataclass, field, fields
from datetime import date, datetime
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import AuthError, BemllmError, ConfigError, UsageError
from .forge import GenerationSpec, PlaceholderSource, forge_object, summary_text
from .idd import IddSchema, load_schema
from .idf import IdfDocument, parse_idf, reference_audit, serialize, serialize_object
from .llm import DEFAULT_EMBEDDING_MODEL, DEFAULT_MODEL, LiveBackend, RecordingBackend, ReplayBackend, StubEmbedder, Transcript
from .pipeline import Outcome, Pipeline, PipelineConfig, RunLog
from .simulator import ExternalRunner, MockRunner, parse_rules
from .rag import DEFAULT_CHUNK_BUDGET, DEFAULT_K, VectorIndex, answer, build_index, chunk_corpus, fetch_page, read_corpus_dir, search
from .viz import Layout, PlotSpec, enduse_stack_plot, parse_output_csv, select_window, weather_panels

log = logging.getLogger("bemllm.cli")

DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_CREDENTIAL_ENV = "OPENAI_API_KEY"
DEFAULT_LOG_FILE = "bemllm.log.jsonl"
LLM_MODES = ("replay", "record", "live")
_SECRET_KEYS = re.compile(r"(api[_-]?key|secret|token|password)", re.I)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class AppConfig:
    idd_path: str | None = None
    simulator: str | None = None
    weather_path: str | None = None
    design_day_only: bool = True
    expand_objects: bool = False
    simulator_timeout: float = 600.0
    mock_rules: str | None = None
    llm_mode: str = "replay"
    transcripts: list[str] = field(default_factory=list)
    record_path: str | None = None
    base_url: str = DEFAULT_BASE_URL
    model: str = DEFAULT_MODEL
    credential_env: str = DEFAULT_CREDENTIAL_ENV
    embedding_model: str = DEFAULT_EMBEDDING_MODEL
    rag_k: int = DEFAULT_K
    chunk_budget: int = DEFAULT_CHUNK_BUDGET
    stub_dimension: int = 256
    log_file: str = DEFAULT_LOG_FILE
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def check_llm(self) -> None:
        """Validate the chat backend settings; called only by commands that talk to a model."""
        if self.llm_mode not in LLM_MODES:
            raise ConfigError(f"llm mode must be one of {', '.join(LLM_MODES)}, got {self.llm_mode!r}")
        if self.llm_mode == "replay":
            if not self.transcripts:
                raise ConfigError("replay mode needs a transcript (--replay PATH or [llm] transcript)")
            missing = [p for p in self.transcripts if not Path(p).is_file()]
            if missing:
                raise ConfigError(f"transcript not found: {', '.join(missing)}")
        if self.llm_mode == "record" and not self.record_path:
            raise ConfigError("record mode needs --record PATH or [llm] record_path")


# (section, key) -> (AppConfig attribute or "pipeline.<attr>", type)
_INI_KEYS = {
    ("paths", "idd"): ("idd_path", "path"),
    ("simulator", "executable"): ("simulator", "path"),
    ("simulator", "weather"): ("weather_path", "path"),
    ("simulator", "design_day_only"): ("design_day_only", "bool"),
    ("simulator", "expand_objects"): ("expand_objects", "bool"),
    ("simulator", "timeout"): ("simulator_timeout", "float"),
    ("simulator", "mock_rules"): ("mock_rules", "path"),
    ("llm", "mode"): ("llm_mode", "str"),
    ("llm", "transcript"): ("transcripts", "paths"),
    ("llm", "record_path"): ("record_path", "path"),
    ("llm", "base_url"): ("base_url", "str"),
    ("llm", "model"): ("model", "str"),
    ("llm", "credential_env"): ("credential_env", "str"),
    ("llm", "embedding_model"): ("embedding_model", "str"),
    ("rag", "k"): ("rag_k", "int"),
    ("rag", "chunk_budget"): ("chunk_budget", "int"),
    ("rag", "stub_dimension"): ("stub_dimension", "int"),
    ("logging", "file"): ("log_file", "path"),
    ("pipeline", "max_repair_iterations"): ("pipeline.max_repair_iterations", "int"),
    ("pipeline", "max_objects_per_repair"): ("pipeline.max_objects_per_repair", "int"),
    ("pipeline", "parallel_generation"): ("pipeline.parallel_generation", "bool"),
    ("pipeline", "workers"): ("pipeline.workers", "int"),
    ("pipeline", "seed"): ("pipeline.seed", "int"),
    ("pipeline", "strict"): ("pipeline.strict", "bool"),
    ("pipeline", "fill_defaults"): ("pipeline.fill_defaults", "bool"),
}


def _convert(parser: configparser.ConfigParser, section: str, key: str, kind: str, base: Path):
    raw = parser.get(section, key)
    try:
        if kind == "bool":
            return parser.getboolean(section, key)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc
    if kind == "path":
        return str((base / raw).resolve()) if raw else None
    if kind == "paths":
        return [str((base / p).resolve()) for p in raw.split()]
    return raw


def load_config_file(path: str | Path) -> dict[str, object]:
    """Read an INI file into {attribute: value}; relative paths resolve against the file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    parser = configparser.ConfigParser()
    try:
        parser.read(p, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    values: dict[str, object] = {}
    for section in parser.sections():
        for key in parser[section]:
            if _SECRET_KEYS.search(key) and key != "credential_env":
                raise ConfigError(f"[{section}] {key}: credentials belong in an environment variable, not the config file")
            spec = _INI_KEYS.get((section, key))
            if spec is None:
                raise ConfigError(f"{p}: unknown setting [{section}] {key}")
            attr, kind = spec
            values[attr] = _convert(parser, section, key, kind, p.parent)
    return values


def _apply(cfg: AppConfig, values: dict[str, object]) -> None:
    pipe = {}
    for attr, value in values.items():
        if attr.startswith("pipeline."):
            pipe[attr.split(".", 1)[1]] = value
        else:
            setattr(cfg, attr, value)
    if pipe:
        current = {f.name: getattr(cfg.pipeline, f.name) for f in fields(PipelineConfig)}
        try:
            cfg.pipeline = PipelineConfig(**{**current, **pipe})
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


# flag dest -> AppConfig attribute; flags left at None were not given
_FLAG_ATTRS = {
    "idd": "idd_path",
    "simulator": "simulator",
    "weather": "weather_path",
    "design_day": "design_day_only",
    "expand_objects": "expand_objects",
    "mock_rules": "mock_rules",
    "record": "record_path",
    "base_url": "base_url",
    "model": "model",
    "credential_env": "credential_env",
    "embedding_model": "embedding_model",
    "k": "rag_k",
    "chunk_budget": "chunk_budget",
    "stub_dimension": "stub_dimension",
    "log_file": "log_file",
    "max_iterations": "pipeline.max_repair_iterations",
    "max_objects": "pipeline.max_objects_per_repair",
    "parallel": "pipeline.parallel_generation",
    "workers": "pipeline.workers",
    "seed": "pipeline.seed",
    "strict": "pipeline.strict",
    "fill_defaults": "pipeline.fill_defaults",
}


def resolve_config(args: argparse.Namespace) -> AppConfig:
    cfg = AppConfig()
    if getattr(args, "config", None):
        _apply(cfg, load_config_file(args.config))
    flags = {}
    for dest, attr in _FLAG_ATTRS.items():
        value = getattr(args, dest, None)
        if value is not None:
            flags[attr] = value
    if getattr(args, "replay", None):
        flags["transcripts"] = list(args.replay)
        flags["llm_mode"] = "replay"
    if getattr(args, "record", None):
        flags["llm_mode"] = "record"
    if getattr(args, "live", False):
        flags["llm_mode"] = "live"
    _apply(cfg, flags)
    model = cfg.model
    if cfg.pipeline.model_id != model:
        current = {f.name: getattr(cfg.pipeline, f.name) for f in fields(PipelineConfig)}
        cfg.pipeline = PipelineConfig(**{**current, "model_id": model})
    return cfg


# ---------------------------------------------------------------------------
# logging


class JsonLineFormatter(logging.Formatter):
    """One JSON object per record; ``extra={"record": {...}}`` is merged in."""

    def format(self, record: logging.LogRecord) -> str:
        out = {
            "time": datetime.fromtimestamp(record.created).isoformat(timespec="milliseconds"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        payload = getattr(record, "record", None)
        if isinstance(payload, dict):
            out.update(payload)
        if record.exc_info:
            out["exception"] = self.formatException(record.exc_info)
        return json.dumps(out, sort_keys=True, default=str)


def setup_logging(log_file: str | None, verbose: bool) -> list[logging.Handler]:
    root = logging.getLogger("bemllm")
    root.setLevel(logging.DEBUG)
    handlers: list[logging.Handler] = []
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    handlers.append(console)
    if log_file:
        fh = logging.FileHandler(log_file, mode="a", encoding="utf-8")
        fh.setLevel(logging.DEBUG)
        fh.setFormatter(JsonLineFormatter())
        handlers.append(fh)
    for h in handlers:
        root.addHandler(h)
    return handlers


def _log_runlog(runlog: RunLog) -> None:
    for rec in runlog.records():
        log.info("run %s", rec["event"], extra={"record": rec})


# ---------------------------------------------------------------------------
# backends and helpers


def chat_backend(cfg: AppConfig):
    cfg.check_llm()
    if cfg.llm_mode == "replay":
        return ReplayBackend(Transcript.merged(cfg.transcripts), embedding_model=cfg.embedding_model)
    try:
        live = LiveBackend.from_env(cfg.base_url, cfg.credential_env, embedding_model=cfg.embedding_model)
    except AuthError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.llm_mode == "record":
        return RecordingBackend(live, Transcript(cfg.record_path))
    return live


_STUB_ID = re.compile(r"^stub-hash-(\d+)-s(\d+)$")


def embed_backend(cfg: AppConfig, embedder_id: str | None = None, use_stub: bool = True):
    """The stub embedder when ``embedder_id`` names one (or none is given and ``use_stub``)."""
    if embedder_id is not None:
        m = _STUB_ID.match(embedder_id)
        if m:
            return StubEmbedder(int(m.group(1)), int(m.group(2)))
        return chat_backend(cfg)
    if use_stub:
        return StubEmbedder(cfg.stub_dimension)
    return chat_backend(cfg)


def simulation_runner(cfg: AppConfig, schema: IddSchema):
    if cfg.simulator:
        return ExternalRunner(
            cfg.simulator,
            design_day_only=cfg.design_day_only,
            expand_objects=cfg.expand_objects,
            timeout=cfg.simulator_timeout,
            schema=schema,
        )
    rules = parse_rules(Path(cfg.mock_rules).read_text(encoding="utf-8")) if cfg.mock_rules else None
    return MockRunner(schema, rules)


def _read(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"file not found: {p}")
    data = p.read_bytes()
    if p.suffix == ".gz":
        data = gzip.decompress(data)
    return data.decode("utf-8")


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")
        print(f"wrote {path}")


def _parse_assignment(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise UsageError(f"--set expects FIELD=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _finish_run(runlog: RunLog, doc: IdfDocument, schema: IddSchema, args) -> int:
    _log_runlog(runlog)
    if getattr(args, "runlog", None):
        Path(args.runlog).write_text(runlog.to_jsonl(), encoding="utf-8")
    _write(args.out, serialize(doc, schema))
    print(f"outcome: {runlog.outcome.value} ({len(runlog.repair_rounds)} repair rounds; {runlog.final_report})")
    for f in runlog.failures:
        print(f"failure: {f}")
    return 0 if runlog.outcome == Outcome.Clean and not runlog.failures else 1


# ---------------------------------------------------------------------------
# commands


def cmd_gen_object(args, cfg: AppConfig, schema: IddSchema) -> int:
    assignments = dict(_parse_assignment(s) for s in args.set or [])
    if args.llm:
        request = "; ".join(f"{k} = {v}" for k, v in assignments.items())
        if args.free_text:
            request = f"{request}. {args.free_text}" if request else args.free_text
        if not request:
            raise UsageError("--llm needs at least one --set or --free-text")
        pipe = Pipeline(schema, chat_backend(cfg), config=cfg.pipeline)
        entry, obj = pipe.generate_object(args.class_name, request, args.name or "")
        if obj is None:
            print(f"generation failed: {entry.error}")
            return 1
        _write(args.out, serialize_object(obj, schema) + "\n")
        print(summary_text(entry.report))
        return 0
    if args.name:
        assignments.setdefault("Name", args.name)
    spec = GenerationSpec.create(schema, args.class_name, assignments, args.free_text)
    obj, report = forge_object(schema, spec, PlaceholderSource(cfg.pipeline.seed), cfg.pipeline.fill_defaults)
    _write(args.out, serialize_object(obj, schema) + "\n")
    print(summary_text(report))
    return 0


def cmd_gen_idf(args, cfg, schema) -> int:
    description = _read(args.description)
    initial = parse_idf(_read(args.initial)) if args.initial else IdfDocument()
    pipe = Pipeline(schema, chat_backend(cfg), simulation_runner(cfg, schema), cfg.pipeline)
    doc, runlog = pipe.generate_idf(description, initial)
    return _finish_run(runlog, doc, schema, args)


def cmd_modify_idf(args, cfg, schema) -> int:
    if bool(args.request) == bool(args.request_file):
        raise UsageError("give exactly one of --request or --request-file")
    request = args.request or _read(args.request_file)
    doc = parse_idf(_read(args.idf))
    pipe = Pipeline(schema, chat_backend(cfg), config=cfg.pipeline)
    new_doc, runlog = pipe.modify_idf(doc, request)
    return _finish_run(runlog, new_doc, schema, args)


def cmd_validate(args, cfg, schema) -> int:
    doc = parse_idf(_read(args.idf))
    for w in doc.warnings:
        print(f"parse warning: {w}")
    audit = reference_audit(doc, schema)
    for d in audit.dangling:
        obj = doc.objects[d.object_index]
        print(
            f"dangling reference: {obj.class_name} {obj.name!r} field {d.ordinal + 1} names {d.name!r}, "
            f"which is not in {', '.join(d.expected_lists)}"
        )
    for p in audit.placeholders:
        obj = doc.objects[p.object_index]
        print(f"placeholder: {obj.class_name} {obj.name!r} field {p.ordinal + 1} is {p.token}")
    for c in audit.skipped_classes:
        print(f"not checked (class not in the dictionary): {c}")
    failed = not audit.clean
    if args.simulate:
        report = simulation_runner(cfg, schema).run(doc, cfg.weather_path)
        print(f"simulation: {report.summary()}")
        for e in report.entries:
            print(f"  {e.severity.name}: {e.message}")
        failed = failed or not report.clean
    print(f"{len(doc.objects)} objects, {len(audit.dangling)} dangling references, {len(audit.placeholders)} placeholders")
    log.info("validate", extra={"record": {"event": "validate", "dangling": len(audit.dangling),
                                           "placeholders": len(audit.placeholders), "ok": not failed}})
    return 1 if failed else 0


def cmd_repair(args, cfg, schema) -> int:
    doc = parse_idf(_read(args.idf))
    pipe = Pipeline(schema, chat_backend(cfg), simulation_runner(cfg, schema), cfg.pipeline)
    runlog = RunLog()
    final = pipe.debug_loop(doc, runlog)
    return _finish_run(runlog, final, schema, args)


_DATE_FORMATS = ("%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M", "%Y-%m-%d", "%m/%d")


def parse_when(text: str, year: int) -> date | datetime:
    for fmt in _DATE_FORMATS:
        try:
            value = datetime.strptime(text, fmt)
        except ValueError:
            continue
        if fmt == "%m/%d":
            return date(year, value.month, value.day)
        return value.date() if "H" not in fmt else value
    raise UsageError(f"cannot read date {text!r}; use YYYY-MM-DD, YYYY-MM-DDTHH:MM or MM/DD")


def cmd_viz(args, cfg, schema) -> int:
    table = parse_output_csv(_read(args.csv), year=args.year)
    window = None
    if args.start or args.end:
        if not (args.start and args.end):
            raise UsageError("give both --start and --end")
        year = table.timestamps[0].year
        start, end = parse_when(args.start, year), parse_when(args.end, year)
        if type(start) is not type(end):
            raise UsageError("--start and --end must both be dates or both be date-times")
        window = (start, end)
        select_window(table, *window)
    layout = Layout(label_rotation=args.rotation) if args.rotation is not None else Layout()
    kind = "enduse_stack" if args.plot == "enduse" else "weather_panels"
    spec = PlotSpec(kind, window=window, layout=layout, title=args.title)
    svg = enduse_stack_plot(table, spec) if kind == "enduse_stack" else weather_panels(table, spec)
    _write(args.out, svg)
    return 0


def cmd_rag_index(args, cfg, schema) -> int:
    chunks = chunk_corpus(read_corpus_dir(args.corpus), cfg.chunk_budget)
    if not chunks:
        raise UsageError(f"no .txt or .md text found under {args.corpus}")
    backend = embed_backend(cfg, use_stub=args.embedder == "stub")
    index = build_index(chunks, backend)
    index.save(args.index)
    print(f"indexed {len(index)} chunks (dimension {index.dimension}, embedder {index.embedder_id}) into {args.index}")
    return 0


def cmd_rag_query(args, cfg, schema) -> int:
    index = VectorIndex.load(args.index)
    backend = embed_backend(cfg, index.embedder_id)
    if args.answer:
        text, cited = answer(index, args.question, cfg.rag_k, backend, chat_backend(cfg), cfg.model)
        print(text)
        print(f"sources: {', '.join(cited)}")
        return 0
    for rank, (chunk, score) in enumerate(search(index, args.question, cfg.rag_k, backend), start=1):
        preview = chunk.text if len(chunk.text) <= 100 else chunk.text[:97] + "..."
        print(f"{rank}. {chunk.id} score={score:.4f} {preview}")
    return 0


def cmd_rag_fetch(args, cfg, schema) -> int:
    import httpx

    try:
        text = fetch_page(args.url)
    except httpx.HTTPError as exc:
        print(f"fetch failed: {exc}")
        return 1
    if not text.strip():
        print(f"no text found at {args.url}")
        return 1
    _write(args.out, text + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser


def _common_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("general")
    g.add_argument("--config", metavar="INI", help="settings file; flags override it")
    g.add_argument("--log-file", metavar="PATH", help=f"structured JSON-lines log (default {DEFAULT_LOG_FILE})")
    g.add_argument("--idd", metavar="PATH", help="IDD file (default: the bundled EnergyPlus 23.2 subset)")
    g.add_argument("-v", "--verbose", action="store_true", help="print progress messages")
    return p


def _llm_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("model backend")
    mode = g.add_mutually_exclusive_group()
    mode.add_argument("--replay", metavar="JSONL", action="append", help="answer from recorded transcripts (repeatable)")
    mode.add_argument("--record", metavar="JSONL", help="call the live model and append every exchange here")
    mode.add_argument("--live", action="store_true", default=None, help="call the live model without recording")
    g.add_argument("--base-url", help=f"OpenAI-compatible endpoint (default {DEFAULT_BASE_URL})")
    g.add_argument("--model", help=f"chat model id (default {DEFAULT_MODEL})")
    g.add_argument("--credential-env", metavar="VAR", help=f"environment variable holding the API key (default {DEFAULT_CREDENTIAL_ENV})")
    g.add_argument("--embedding-model", help=f"embedding model id (default {DEFAULT_EMBEDDING_MODEL})")
    return p


def _pipeline_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("pipeline")
    g.add_argument("--max-iterations", type=int, metavar="N", help="repair rounds before giving up (default 10)")
    g.add_argument("--max-objects", type=int, metavar="N", help="objects replaced per repair round, 1 to 10 (default 10)")
    g.add_argument("--parallel", action=argparse.BooleanOptionalAction, default=None, help="generate objects concurrently")
    g.add_argument("--workers", type=int, metavar="N", help="threads for parallel generation (default 4)")
    g.add_argument("--seed", type=int, help="placeholder token seed (default 0)")
    g.add_argument("--strict", action=argparse.BooleanOptionalAction, default=None, help="fail instead of returning a partial result")
    g.add_argument("--fill-defaults", action=argparse.BooleanOptionalAction, default=None, help="write IDD defaults into optional fields")
    return p


def _simulator_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("simulator")
    g.add_argument("--simulator", metavar="EXE", help="EnergyPlus executable (default: built-in mock)")
    g.add_argument("--weather", metavar="EPW", help="weather file for annual runs")
    g.add_argument("--design-day", action=argparse.BooleanOptionalAction, default=None, help="simulate design days only (default on)")
    g.add_argument("--expand-objects", action=argparse.BooleanOptionalAction, default=None, help="run ExpandObjects first (HVACTemplate inputs)")
    g.add_argument("--mock-rules", metavar="PATH", help="rule file for the mock simulator")
    return p


def build_parser() -> argparse.ArgumentParser:
    common, llm, pipe, sim = _common_parent(), _llm_parent(), _pipeline_parent(), _simulator_parent()
    parser = argparse.ArgumentParser(
        prog="bemllm",
        description="Generate, modify, validate and repair EnergyPlus models with a language model; "
        "answer documentation questions; plot simulation output.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("gen-object", parents=[common, llm, pipe], help="generate one IDF object")
    p.add_argument("--class", dest="class_name", required=True, help="IDD class, e.g. People")
    p.add_argument("--set", action="append", metavar="FIELD=VALUE", help="user value for a field (repeatable)")
    p.add_argument("--name", help="object name")
    p.add_argument("--free-text", help="extra request text")
    p.add_argument("--llm", action="store_true", help="ask the model instead of building the object directly")
    p.add_argument("--out", metavar="PATH", help="write the object here instead of stdout")
    p.set_defaults(func=cmd_gen_object)

    p = sub.add_parser("gen-idf", parents=[common, llm, pipe, sim], help="build a model from a text description")
    p.add_argument("--description", required=True, metavar="PATH", help="building description text file")
    p.add_argument("--initial", metavar="IDF", help="geometry and settings to start from")
    p.add_argument("--out", metavar="IDF", help="write the final model here instead of stdout")
    p.add_argument("--runlog", metavar="JSONL", help="write the run log here")
    p.set_defaults(func=cmd_gen_idf)

    p = sub.add_parser("modify-idf", parents=[common, llm, pipe], help="apply a change request to a model")
    p.add_argument("idf", help="model to change")
    p.add_argument("--request", help="the change request")
    p.add_argument("--request-file", metavar="PATH", help="read the change request from a file")
    p.add_argument("--out", metavar="IDF", help="write the changed model here instead of stdout")
    p.add_argument("--runlog", metavar="JSONL", help="write the run log here")
    p.set_defaults(func=cmd_modify_idf)

    p = sub.add_parser("validate", parents=[common, sim], help="check references and placeholders")
    p.add_argument("idf", help="model to check")
    p.add_argument("--simulate", action="store_true", help="also run the simulator and report its errors")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("repair", parents=[common, llm, pipe, sim], help="run the simulate-and-repair loop")
    p.add_argument("idf", help="model to repair")
    p.add_argument("--out", metavar="IDF", help="write the repaired model here instead of stdout")
    p.add_argument("--runlog", metavar="JSONL", help="write the run log here")
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("viz", help="plot EnergyPlus CSV output as SVG")
    vsub = p.add_subparsers(dest="plot", metavar="PLOT")
    vsub.required = True
    for name, helptext in (("enduse", "stacked area chart of end-use meters"), ("weather", "one panel per weather variable")):
        v = vsub.add_parser(name, parents=[common], help=helptext)
        v.add_argument("--csv", required=True, metavar="PATH", help="EnergyPlus CSV output (.csv or .csv.gz)")
        v.add_argument("--start", help="first day (YYYY-MM-DD or MM/DD) or date-time (YYYY-MM-DDTHH:MM)")
        v.add_argument("--end", help="day whose midnight ends the window, or a date-time")
        v.add_argument("--out", metavar="SVG", help="write the chart here instead of stdout")
        v.add_argument("--year", type=int, help="calendar year for the CSV timestamps (default 2001)")
        v.add_argument("--rotation", type=float, help="y-label rotation in degrees (default 45)")
        v.add_argument("--title", help="chart title")
        v.set_defaults(func=cmd_viz)

    p = sub.add_parser("rag-index", parents=[common, llm], help="chunk and embed a documentation folder")
    p.add_argument("corpus", help="folder of .txt and .md files")
    p.add_argument("index", help="index file to write")
    p.add_argument("--chunk-budget", type=int, metavar="CHARS", help=f"maximum chunk length (default {DEFAULT_CHUNK_BUDGET})")
    p.add_argument("--embedder", choices=("stub", "model"), default="stub", help="stub hashing embedder or the model backend")
    p.add_argument("--stub-dimension", type=int, metavar="N", help="stub embedder dimension (default 256)")
    p.set_defaults(func=cmd_rag_index)

    p = sub.add_parser("rag-query", parents=[common, llm], help="search an index, optionally answering with the model")
    p.add_argument("index", help="index file")
    p.add_argument("question", help="the question")
    p.add_argument("--k", type=int, metavar="N", help=f"passages to retrieve (default {DEFAULT_K})")
    p.add_argument("--answer", action="store_true", help="ask the chat model to answer from the passages")
    p.set_defaults(func=cmd_rag_query)

    p = sub.add_parser("rag-fetch", parents=[common], help="download a web page as paragraph text")
    p.add_argument("url", help="page to fetch")
    p.add_argument("--out", metavar="PATH", help="write the text here instead of stdout")
    p.set_defaults(func=cmd_rag_fetch)
    return parser


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers: list[logging.Handler] = []
    try:
        cfg = resolve_config(args)
        if getattr(args, "k", None) is not None and args.k < 1:
            raise UsageError("--k must be at least 1")
        handlers = setup_logging(cfg.log_file, args.verbose)
        log.info("command", extra={"record": {"event": "command", "argv": list(argv if argv is not None else sys.argv[1:])}})
        schema = load_schema(cfg.idd_path)
        return args.func(args, cfg, schema)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BemllmError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        if not handlers:
            print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    finally:
        root = logging.getLogger("bemllm")
        for h in handlers:
            root.removeHandler(h)
            h.close()


def main() -> None:
    sys.exit(dispatch())
