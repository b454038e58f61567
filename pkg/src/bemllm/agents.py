"""Prompt rendering and response parsing for the four agent roles.

* central    plans a modification request into task-agent jobs
* extraction turns a building description into (type, name) -> description rows
* generation writes one object of a given class (one renderer for every class)
* repair     rewrites the objects named by simulator errors

Templates ship as text files under ``bemllm/templates`` and use ``{name}``
placeholders.  A directory with files of the same names can replace them.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    AllRowsInvalid,
    CountExceeded,
    EmptyDescription,
    EmptyErrors,
    EmptyExcerpt,
    EmptyIdf,
    EmptyRequest,
    IdfError,
    MissingObjectBlock,
    MissingTupleBlock,
    NoObjectFound,
    NoPlanFound,
    NoTableFound,
    ResponseParseError,
    TupleObjectMismatch,
)
from .forge import FieldReport, parse_summary
from .idd import IddSchema, normalize_name
from .idf import IdfDocument, IdfObject, object_key, parse_idf, serialize

MAX_REPAIR_OBJECTS = 10

TEMPLATE_NAMES = (
    "generation",
    "task_generation",
    "task_modify",
    "extraction",
    "repair",
    "central",
    "rag_answer",
)

# object types the extraction agent is restricted to by default
COMMON_OBJECTS = (
    "Material",
    "Material:NoMass",
    "Material:AirGap",
    "WindowMaterial:SimpleGlazingSystem",
    "Construction",
    "Schedule:Compact",
    "People",
    "Lights",
    "ElectricEquipment",
    "ZoneInfiltration:DesignFlowRate",
    "HVACTemplate:Thermostat",
    "HVACTemplate:Zone:PTAC",
)

_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


# ---------------------------------------------------------------------------
# templates


class TemplateSet:
    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory is not None else None

    def text(self, name: str) -> str:
        if self.directory is not None:
            path = self.directory / f"{name}.txt"
            if path.exists():
                return path.read_text(encoding="utf-8")
        return _builtin_template(name)

    def render(self, name: str, **values: str) -> str:
        return render_template(self.text(name), **values)


@lru_cache(maxsize=None)
def _builtin_template(name: str) -> str:
    return resources.files("bemllm.templates").joinpath(f"{name}.txt").read_text(encoding="utf-8")


def template_placeholders(template: str) -> list[str]:
    return list(dict.fromkeys(_PLACEHOLDER.findall(template)))


def render_template(template: str, **values: str) -> str:
    """Substitute ``{name}`` placeholders in one pass.

    Every placeholder must be supplied; substituted text is not rescanned, so
    braces inside an IDF or IDD excerpt are safe.
    """
    missing = [p for p in template_placeholders(template) if p not in values]
    if missing:
        raise KeyError(f"template placeholders not supplied: {', '.join(missing)}")
    return _PLACEHOLDER.sub(lambda m: str(values[m.group(1)]), template)


DEFAULT_TEMPLATES = TemplateSet()


def _class_of_excerpt(idd_excerpt: str) -> str:
    for line in idd_excerpt.splitlines():
        line = line.strip()
        if line and not line.startswith(("!", "\\")):
            return line.rstrip(",;").strip()
    raise EmptyExcerpt("IDD excerpt has no class header")


def render_generation_prompt(
    idd_excerpt: str,
    user_request: str,
    templates: TemplateSet = DEFAULT_TEMPLATES,
    task_agent: bool = False,
) -> str:
    if not idd_excerpt.strip():
        raise EmptyExcerpt("IDD excerpt is empty")
    if not user_request.strip():
        raise EmptyRequest("user request is empty")
    name = "task_generation" if task_agent else "generation"
    return templates.render(
        name,
        class_name=_class_of_excerpt(idd_excerpt),
        user_request=user_request.strip(),
        idd_excerpt=idd_excerpt.rstrip("\n"),
    )


def render_modify_prompt(
    idd_excerpt: str,
    current_object: str,
    request: str,
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> str:
    if not idd_excerpt.strip():
        raise EmptyExcerpt("IDD excerpt is empty")
    if not request.strip():
        raise EmptyRequest("request is empty")
    return templates.render(
        "task_modify",
        class_name=_class_of_excerpt(idd_excerpt),
        user_request=request.strip(),
        current_object=current_object.rstrip("\n"),
        idd_excerpt=idd_excerpt.rstrip("\n"),
    )


def render_extraction_prompt(
    description: str,
    common_object_list: Sequence[str] = COMMON_OBJECTS,
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> str:
    if not description.strip():
        raise EmptyDescription("building description is empty")
    listed = ", ".join(common_object_list) if common_object_list else "(unrestricted)"
    return templates.render(
        "extraction",
        user_description=description.strip(),
        common_internal_load_object_list=listed,
    )


def render_repair_prompt(
    severe_and_fatal: str,
    current_idf: str,
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> str:
    if not severe_and_fatal.strip():
        raise EmptyErrors("no severe or fatal errors to repair")
    if not current_idf.strip():
        raise EmptyIdf("current IDF is empty")
    return templates.render(
        "repair",
        severe_n_fatal_error_str=severe_and_fatal.strip("\n"),
        current_IDF_file_str=current_idf.strip("\n"),
    )


def render_central_prompt(
    user_request: str,
    current_idf: str = "",
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> str:
    if not user_request.strip():
        raise EmptyRequest("modification request is empty")
    return templates.render(
        "central",
        user_request=user_request.strip(),
        current_idf=current_idf.strip("\n") or "(not provided)",
    )


# ---------------------------------------------------------------------------
# literal helpers


def _balanced_spans(text: str, open_ch: str, close_ch: str) -> Iterable[str]:
    """Yield substrings that start at ``open_ch`` and end at its matching ``close_ch``.

    Quotes are honoured so brackets inside string literals do not count.
    """
    start = text.find(open_ch)
    while start != -1:
        depth = 0
        quote = None
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if quote:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == quote:
                    quote = None
                continue
            if ch in "'\"":
                quote = ch
            elif ch == open_ch:
                depth += 1
            elif ch == close_ch:
                depth -= 1
                if depth == 0:
                    yield text[start : i + 1]
                    break
        start = text.find(open_ch, start + 1)


def _literal(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError, MemoryError, RecursionError, TypeError):
        return None


# ---------------------------------------------------------------------------
# extraction


@dataclass(frozen=True)
class ExtractionItem:
    object_type: str
    object_name: str
    description: str


@dataclass
class ExtractionTable:
    items: list[ExtractionItem] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def pairs(self) -> list[tuple[str, str]]:
        return [(it.object_type, it.object_name) for it in self.items]


_ROW = re.compile(
    r"""\(\s*(['"])(?P<type>.+?)\1\s*,\s*(['"])(?P<name>.+?)\3\s*\)\s*:\s*(?P<q>['"])(?P<desc>.*)(?P=q)\s*,?\s*$"""
)


def _raw_rows(response: str) -> list[tuple[object, object]]:
    for span in _balanced_spans(response, "{", "}"):
        value = _literal(span)
        if isinstance(value, dict) and value and any(isinstance(k, tuple) for k in value):
            return list(value.items())
    rows = []
    for line in response.splitlines():
        m = _ROW.search(line.strip())
        if m:
            rows.append(((m.group("type"), m.group("name")), m.group("desc")))
    return rows


def parse_extraction(
    response: str,
    allowed: Sequence[str] | None = None,
    schema: IddSchema | None = None,
) -> ExtractionTable:
    """Read Agent 1's ``{(type, name): description}`` map.

    The first dict literal with tuple keys is used; failing that, lines that
    look like ``('Type', 'Name'): 'description',`` are collected.  Rows that
    break an invariant are dropped with a diagnostic.
    """
    rows = _raw_rows(response)
    if not rows:
        if any(_literal(span) == {} for span in _balanced_spans(response, "{", "}")):
            return ExtractionTable()
        raise NoTableFound("no (object type, object name) map found in the response")
    allowed_norm = {normalize_name(a): a for a in allowed} if allowed else None
    table = ExtractionTable()
    for n, (key, desc) in enumerate(rows, start=1):
        if not (isinstance(key, tuple) and len(key) == 2 and all(isinstance(k, str) for k in key)):
            table.diagnostics.append(f"row {n}: key {key!r} is not an (object type, object name) pair")
            continue
        otype, oname = (k.strip() for k in key)
        if not otype or not oname:
            table.diagnostics.append(f"row {n}: empty object type or name")
            continue
        if normalize_name(otype) == normalize_name(oname):
            table.diagnostics.append(f"row {n}: object name {oname!r} equals its object type")
            continue
        if allowed_norm is not None:
            if normalize_name(otype) not in allowed_norm:
                table.diagnostics.append(f"row {n}: object type {otype!r} is not in the allowed list")
                continue
            otype = allowed_norm[normalize_name(otype)]
        if schema is not None:
            od = schema.get(otype)
            if od is None:
                table.diagnostics.append(f"row {n}: unknown object type {otype!r}")
                continue
            otype = od.class_name
        table.items.append(ExtractionItem(otype, oname, " ".join(str(desc).split())))
    if not table.items:
        raise AllRowsInvalid(table.diagnostics)
    return table


# ---------------------------------------------------------------------------
# generation responses


@dataclass
class GeneratedObjects:
    objects: list[IdfObject]
    summary: FieldReport | None


_FENCE = re.compile(r"```[A-Za-z]*[ \t]*\n(.*?)```", re.S)


def _try_parse(text: str) -> IdfDocument | None:
    try:
        doc = parse_idf(text)
    except IdfError:
        return None
    return doc if doc.objects else None


def _scan_for_objects(text: str, class_names: Iterable[str]) -> IdfDocument | None:
    headers = {normalize_name(c) for c in class_names}
    lines = text.splitlines()
    for i, line in enumerate(lines):
        head = line.strip()
        if head.endswith(",") and normalize_name(head[:-1]) in headers:
            for j in range(i, len(lines)):
                if ";" in lines[j].split("!", 1)[0]:
                    doc = _try_parse("\n".join(lines[i : j + 1]))
                    if doc is not None:
                        return doc
                    break
    return None


def parse_generated(response: str, class_names: Iterable[str] = ()) -> GeneratedObjects:
    """Pull the object(s) and the field summary out of a generation reply.

    Fenced blocks are tried first; otherwise a bare object starting with one
    of ``class_names`` is located in the prose.
    """
    doc = None
    for block in _FENCE.findall(response):
        doc = _try_parse(block)
        if doc is not None:
            break
    if doc is None and class_names:
        doc = _scan_for_objects(response, class_names)
    if doc is None:
        raise NoObjectFound("no IDF object found in the response")
    return GeneratedObjects(list(doc.objects), parse_summary(response))


# ---------------------------------------------------------------------------
# repair responses


@dataclass(frozen=True)
class RepairSet:
    corrected_objects: tuple[IdfObject, ...]
    targets: tuple[tuple[str, str], ...]

    def pairs(self, schema: IddSchema | None = None) -> list[tuple[str, str, IdfObject]]:
        """``(class, original name, corrected object)`` triples for replace_objects."""
        by_key = {object_key(o, schema): o for o in self.corrected_objects}
        out = []
        for cls, name in self.targets:
            key = _target_key(cls, name, schema)
            out.append((cls, name, by_key[key]))
        return out


def _target_key(cls: str, name: str, schema: IddSchema | None) -> tuple[str, str]:
    return object_key(IdfObject.of(cls, name), schema)


_OBJECT_BLOCK_TRIPLE = re.compile(r"```[A-Za-z]*\s*\n?(.*?)```", re.S)
_OBJECT_BLOCK = re.compile(r"(?<!`)``(?!`)(.*?)(?<!`)``(?!`)", re.S)
_TUPLE_BLOCK = re.compile(r"//\s*(\[.*?\])\s*//", re.S)


def parse_repair(response: str, schema: IddSchema | None = None) -> RepairSet:
    tuple_match = _TUPLE_BLOCK.search(response)
    body = response[: tuple_match.start()] + response[tuple_match.end() :] if tuple_match else response
    block = None
    for pattern in (_OBJECT_BLOCK_TRIPLE, _OBJECT_BLOCK):
        for candidate in pattern.findall(body):
            if candidate.strip():
                block = candidate
                break
        if block is not None:
            break
    if block is None:
        raise MissingObjectBlock("no object block between `` `` in the repair response")
    if tuple_match is None:
        raise MissingTupleBlock("no //[ ]// tuple list in the repair response")
    try:
        doc = parse_idf(block)
    except IdfError as exc:
        raise ResponseParseError(f"object block does not parse: {exc}") from exc
    raw = _literal(tuple_match.group(1))
    if not isinstance(raw, list) or not all(
        isinstance(t, tuple) and len(t) == 2 and all(isinstance(s, str) for s in t) for t in raw
    ):
        raise ResponseParseError(f"tuple block is not a list of (type, name) pairs: {tuple_match.group(1)[:200]!r}")
    objects = tuple(doc.objects)
    targets = tuple((t.strip(), n.strip()) for t, n in raw)
    if len(objects) > MAX_REPAIR_OBJECTS or len(targets) > MAX_REPAIR_OBJECTS:
        raise CountExceeded(
            f"repair returned {len(objects)} objects and {len(targets)} targets; the limit is {MAX_REPAIR_OBJECTS}"
        )
    obj_keys = [object_key(o, schema) for o in objects]
    tgt_keys = [_target_key(c, n, schema) for c, n in targets]
    if sorted(obj_keys) != sorted(tgt_keys) or len(set(obj_keys)) != len(obj_keys):
        only_obj = sorted(set(obj_keys) - set(tgt_keys))
        only_tgt = sorted(set(tgt_keys) - set(obj_keys))
        raise TupleObjectMismatch(
            f"objects without a tuple: {only_obj or 'none'}; tuples without an object: {only_tgt or 'none'}"
        )
    return RepairSet(objects, targets)


def format_repair_response(repair: RepairSet, schema: IddSchema | None = None) -> str:
    """Write a RepairSet in the reply shape the repair template asks for."""
    block = serialize(IdfDocument(repair.corrected_objects), schema).strip("\n")
    tuples = "[" + ", ".join(f"({c!r}, {n!r})" for c, n in repair.targets) + "]"
    return f"``{block}``\n//{tuples}//\n"


# ---------------------------------------------------------------------------
# central plan


@dataclass(frozen=True)
class PlanJob:
    action: str  # "create" or "modify"
    object_type: str
    object_name: str
    request: str


@dataclass(frozen=True)
class PlanEntry:
    sub_request: str
    jobs: tuple[PlanJob, ...]


def parse_central_plan(response: str) -> list[PlanEntry]:
    m = _TUPLE_BLOCK.search(response)
    raw = _literal(m.group(1)) if m else None
    if not isinstance(raw, list):
        raise NoPlanFound("no //[ ]// plan in the central agent response")
    plan = []
    for n, entry in enumerate(raw, start=1):
        if not (isinstance(entry, tuple) and len(entry) == 2 and isinstance(entry[0], str)):
            raise NoPlanFound(f"plan entry {n} is not a (sub-task, jobs) pair")
        jobs = []
        for job in entry[1]:
            if not (isinstance(job, tuple) and len(job) == 4 and all(isinstance(s, str) for s in job)):
                raise NoPlanFound(f"plan entry {n} has a malformed job: {job!r}")
            action = job[0].strip().lower()
            if action not in ("create", "modify"):
                raise NoPlanFound(f"plan entry {n}: unknown action {job[0]!r}")
            jobs.append(PlanJob(action, job[1].strip(), job[2].strip(), job[3].strip()))
        plan.append(PlanEntry(entry[0].strip(), tuple(jobs)))
    return plan


def format_plan(plan: Sequence[PlanEntry]) -> str:
    entries = []
    for e in plan:
        jobs = ", ".join(repr((j.action, j.object_type, j.object_name, j.request)) for j in e.jobs)
        entries.append(f"({e.sub_request!r}, [{jobs}])")
    return "//[\n  " + ",\n  ".join(entries) + "\n]//\n"


# ---------------------------------------------------------------------------
# rag


def render_rag_prompt(question: str, passages: Sequence[tuple[str, str]], templates: TemplateSet = DEFAULT_TEMPLATES) -> str:
    if not question.strip():
        raise EmptyRequest("question is empty")
    context = "\n\n".join(f"[{cid}] {text}" for cid, text in passages)
    return templates.render("rag_answer", context=context, question=question.strip())
