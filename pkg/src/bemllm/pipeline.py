"""Generation and modification workflows with a bounded, simulator-driven repair loop."""

from __future__ import annotations

import enum
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

from .agents import (
    COMMON_OBJECTS,
    DEFAULT_TEMPLATES,
    MAX_REPAIR_OBJECTS,
    ExtractionItem,
    ExtractionTable,
    PlanEntry,
    PlanJob,
    RepairSet,
    TemplateSet,
    parse_central_plan,
    parse_extraction,
    parse_generated,
    parse_repair,
    render_central_prompt,
    render_extraction_prompt,
    render_generation_prompt,
    render_modify_prompt,
    render_repair_prompt,
)
from .errors import (
    AssignmentError,
    CountExceeded,
    ExtractionFailed,
    GenerationFailed,
    IdfError,
    PlanFailed,
    RepairExhausted,
    RepairParseFailed,
    ResponseParseError,
    TargetNotFound,
    UnknownClass,
)
from .forge import CATEGORIES, FieldReport, GenerationSpec, Violation, align_values, validate_generated
from .idd import IddSchema, idd_excerpt, normalize_name, object_def
from .idf import (
    FieldValue,
    IdfDocument,
    IdfObject,
    changed_objects,
    find_objects,
    merge,
    object_key,
    reference_audit,
    reference_registry,
    replace_objects,
    serialize,
    serialize_object,
    unified_diff,
)
from .llm import DEFAULT_MODEL, ChatBackend, ChatRequest, complete
from .simulator import MockRunner, SimulationReport, default_rules, severe_fatal_digest

log = logging.getLogger(__name__)


class Outcome(str, enum.Enum):
    Clean = "Clean"
    MaxIterationsExceeded = "MaxIterationsExceeded"
    Aborted = "Aborted"


@dataclass
class PipelineConfig:
    max_repair_iterations: int = 10
    max_objects_per_repair: int = MAX_REPAIR_OBJECTS
    parallel_generation: bool = False
    workers: int = 4
    seed: int = 0
    model_id: str = DEFAULT_MODEL
    strict: bool = False
    fill_defaults: bool = True
    excerpt_groups: int = 12
    weather_path: str | None = None
    common_objects: tuple[str, ...] = COMMON_OBJECTS
    templates: TemplateSet = DEFAULT_TEMPLATES

    def __post_init__(self):
        if self.max_repair_iterations < 1:
            raise ValueError("max_repair_iterations must be at least 1")
        if not 1 <= self.max_objects_per_repair <= MAX_REPAIR_OBJECTS:
            raise ValueError(f"max_objects_per_repair must be between 1 and {MAX_REPAIR_OBJECTS}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


# ---------------------------------------------------------------------------
# run log


@dataclass
class Attempt:
    prompt_digest: str
    violations: list[str] = field(default_factory=list)
    parse_error: str | None = None

    @property
    def ok(self) -> bool:
        return not self.violations and self.parse_error is None


@dataclass
class ObjectLog:
    item: ExtractionItem
    action: str = "create"
    attempts: list[Attempt] = field(default_factory=list)
    report: FieldReport | None = None
    objects: list[tuple[str, str]] = field(default_factory=list)
    error: str | None = None


@dataclass
class Substitution:
    class_name: str
    object_name: str
    field: str
    token: str
    value: str


@dataclass
class RepairRound:
    index: int
    report_summary: str
    severe_or_fatal: int
    prompt_digest: str
    targets: list[tuple[str, str]]
    added: list[tuple[str, str]]
    diff: str
    changed_indices: list[int]
    reprompted: bool = False


@dataclass
class RunLog:
    extraction: list[ExtractionItem] = field(default_factory=list)
    plan: list[PlanEntry] = field(default_factory=list)
    per_object: list[ObjectLog] = field(default_factory=list)
    substitutions: list[Substitution] = field(default_factory=list)
    repair_rounds: list[RepairRound] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    final_report: str = ""
    final_severe_or_fatal: int = 0
    outcome: Outcome = Outcome.Clean

    def records(self) -> list[dict[str, Any]]:
        out: list[dict[str, Any]] = []
        for it in self.extraction:
            out.append({"event": "extraction", "object_type": it.object_type, "object_name": it.object_name,
                        "description": it.description})
        for n, e in enumerate(self.plan, start=1):
            out.append({"event": "plan", "entry": n, "sub_request": e.sub_request,
                        "jobs": [[j.action, j.object_type, j.object_name, j.request] for j in e.jobs]})
        for o in self.per_object:
            out.append({
                "event": "object",
                "action": o.action,
                "object_type": o.item.object_type,
                "object_name": o.item.object_name,
                "attempts": [{"prompt_digest": a.prompt_digest, "violations": a.violations,
                              "parse_error": a.parse_error} for a in o.attempts],
                "report": {c: list(getattr(o.report, c)) for c in CATEGORIES} if o.report else None,
                "objects": [list(k) for k in o.objects],
                "error": o.error,
            })
        for s in self.substitutions:
            out.append({"event": "substitution", "class": s.class_name, "name": s.object_name, "field": s.field,
                        "token": s.token, "value": s.value})
        for r in self.repair_rounds:
            out.append({"event": "repair_round", "round": r.index, "report": r.report_summary,
                        "severe_or_fatal": r.severe_or_fatal, "prompt_digest": r.prompt_digest,
                        "targets": [list(t) for t in r.targets], "added": [list(t) for t in r.added],
                        "changed_indices": r.changed_indices, "reprompted": r.reprompted, "diff": r.diff})
        for f in self.failures:
            out.append({"event": "failure", "message": f})
        out.append({"event": "outcome", "outcome": self.outcome.value, "report": self.final_report,
                    "severe_or_fatal": self.final_severe_or_fatal})
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())


# ---------------------------------------------------------------------------
# helpers


def _ask(chat: ChatBackend, prompt: str, config: PipelineConfig, tag: str) -> tuple[str, str]:
    req = ChatRequest(prompt, temperature=0.0, model_id=config.model_id, tag=tag)
    return complete(chat, req), req.digest


def _retry_prompt(prompt: str, problems: Sequence[str]) -> str:
    listed = "\n".join(f"- {p}" for p in problems)
    return (
        f"{prompt}\n\nYour previous answer broke these rules:\n{listed}\n"
        "Answer again, following every rule above."
    )


def _describe(v: Violation) -> str:
    return f'{v.field}: expected {v.rule} "{v.expected}", found "{v.found}"'


def generation_request(item: ExtractionItem) -> str:
    if not item.object_name:
        return f'Generate a "{item.object_type}" object. {item.description}'
    return f'Generate a "{item.object_type}" object named "{item.object_name}". {item.description}'


def normalized_object(schema: IddSchema, obj: IdfObject) -> IdfObject:
    """Place values at their IDD ordinals using the field-name comments.

    A model that skips a field but labels the rest correctly would otherwise
    shift every later value by one.
    """
    od = schema.get(obj.class_name)
    if od is None:
        return obj
    found, realigned = align_values(od, obj)
    if not realigned:
        return IdfObject(od.class_name, obj.values, obj.source_span)
    last = max(found)
    values = []
    for i in range(1, last + 1):
        fd = od.field_at(i)
        values.append(found.get(i, FieldValue.blank(fd.name if fd else None)))
    return IdfObject(od.class_name, tuple(values), obj.source_span)


def check_generated(
    schema: IddSchema,
    obj: IdfObject,
    summary: FieldReport | None,
    item: ExtractionItem,
    fill_defaults: bool = True,
) -> tuple[IdfObject, FieldReport | None, list[str]]:
    """Validate one generated object against the generation rules.

    Fields the model reports as user-set are taken at face value; every other
    field must follow the placeholder, default and blank rules.  Without a
    summary, any literal that differs from the default counts as user-set.
    """
    problems: list[str] = []
    od = schema.get(obj.class_name)
    if od is None:
        return obj, None, [f"unknown object type {obj.class_name!r}"]
    if normalize_name(od.class_name) != normalize_name(item.object_type):
        problems.append(f"expected a {item.object_type} object, found {od.class_name}")
        return obj, None, problems
    obj = normalized_object(schema, obj)
    if od.owns_name and obj.name.strip().lower() != item.object_name.strip().lower():
        problems.append(f'Name: expected user value "{item.object_name}", found "{obj.name}"')
    assignments: dict[str, str] = {}
    if summary is not None:
        user_names = summary.user_set
    else:
        user_names = []
        for i, v in enumerate(obj.values, start=1):
            fd = od.field_at(i)
            if fd is None or v.is_blank or v.is_placeholder:
                continue
            if fd.default is None or v.text.strip().lower() != fd.default.strip().lower():
                user_names.append(fd.name)
    for name in user_names:
        fd = od.field(name)
        if fd is None:
            problems.append(f"summary names a field {name!r} that {od.class_name} does not have")
            continue
        value = obj.value(fd.ordinal)
        if value.is_placeholder:
            problems.append(f"{fd.name}: reported as set by user but holds a placeholder")
            continue
        assignments[fd.name] = value.text
    try:
        spec = GenerationSpec.create(schema, od.class_name, assignments)
        result = validate_generated(schema, obj, spec, fill_defaults=fill_defaults)
    except AssignmentError as exc:
        problems.append(str(exc))
        return obj, None, problems
    problems.extend(_describe(v) for v in result.violations)
    if summary is not None and result.ok:
        claimed = summary.as_sets()
        actual = result.report.as_sets()
        for cat in CATEGORIES:
            for name in sorted({normalize_name(n) for n in claimed[cat]} - {normalize_name(n) for n in actual[cat]}):
                problems.append(f"summary lists {name!r} under the wrong section")
    return obj, result.report, problems


# ---------------------------------------------------------------------------
# pipeline


class Pipeline:
    """Bundle of schema, chat backend, simulator and settings for one run."""

    def __init__(self, schema: IddSchema, chat: ChatBackend, runner=None, config: PipelineConfig | None = None):
        self.schema = schema
        self.chat = chat
        self.runner = runner if runner is not None else MockRunner(schema)
        self.config = config or PipelineConfig()

    # -- shared pieces -------------------------------------------------------

    def excerpt(self, class_name: str) -> str:
        return idd_excerpt(self.schema, class_name, extensible_groups=self.config.excerpt_groups)

    def _generate_one(self, item: ExtractionItem, prompt: str, tag: str, action: str = "create") -> tuple[ObjectLog, IdfObject | None]:
        entry = ObjectLog(item, action=action)
        current = prompt
        for attempt_no in (1, 2):
            response, digest = _ask(self.chat, current, self.config, f"{tag}:attempt{attempt_no}")
            attempt = Attempt(digest)
            entry.attempts.append(attempt)
            try:
                parsed = parse_generated(response, [item.object_type])
            except ResponseParseError as exc:
                attempt.parse_error = str(exc)
                problems = [f"the answer must contain the {item.object_type} object in IDF syntax"]
            else:
                candidates = [o for o in parsed.objects if normalize_name(o.class_name) == normalize_name(item.object_type)]
                if len(candidates) != 1:
                    problems = [f"expected exactly one {item.object_type} object, found {len(candidates)}"]
                    attempt.violations = problems
                else:
                    obj, report, problems = check_generated(
                        self.schema, candidates[0], parsed.summary, item, self.config.fill_defaults
                    )
                    attempt.violations = problems
                    if not problems:
                        entry.report = report
                        entry.objects = [(obj.class_name, obj.name)]
                        return entry, obj
            current = _retry_prompt(prompt, problems)
        reasons = entry.attempts[-1].violations or [entry.attempts[-1].parse_error or "unknown failure"]
        entry.error = "; ".join(reasons)
        return entry, None

    # -- generation ----------------------------------------------------------

    def generate_object(self, class_name: str, request: str, name: str = "") -> tuple[ObjectLog, IdfObject | None]:
        """Ask for one object of ``class_name`` and check it against the generation rules."""
        od = object_def(self.schema, class_name)
        item = ExtractionItem(od.class_name, name, request)
        prompt = render_generation_prompt(self.excerpt(od.class_name), generation_request(item), self.config.templates)
        return self._generate_one(item, prompt, f"agent2:single:{od.class_name}:{name}")

    def extract(self, description: str) -> ExtractionTable:
        prompt = render_extraction_prompt(description, self.config.common_objects, self.config.templates)
        current = prompt
        last_error = ""
        for attempt_no in (1, 2):
            response, _ = _ask(self.chat, current, self.config, f"agent1:extract:attempt{attempt_no}")
            try:
                return parse_extraction(response, allowed=self.config.common_objects or None, schema=self.schema)
            except ResponseParseError as exc:
                last_error = str(exc)
                current = _retry_prompt(prompt, [f"the answer could not be read: {exc}"])
        raise ExtractionFailed(last_error)

    def generate_idf(self, description: str, initial: IdfDocument) -> tuple[IdfDocument, RunLog]:
        runlog = RunLog()
        table = self.extract(description)
        runlog.extraction = list(table.items)
        for d in table.diagnostics:
            log.warning("extraction: %s", d)

        def work(pair):
            n, item = pair
            prompt = render_generation_prompt(
                self.excerpt(item.object_type), generation_request(item), self.config.templates
            )
            return self._generate_one(item, prompt, f"agent2:{n}:{item.object_type}:{item.object_name}")

        pairs = list(enumerate(table.items, start=1))
        if self.config.parallel_generation and len(pairs) > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                results = list(pool.map(work, pairs))
        else:
            results = [work(p) for p in pairs]
        generated = []
        for entry, obj in results:
            runlog.per_object.append(entry)
            if obj is None:
                runlog.outcome = Outcome.Aborted
                raise GenerationFailed(entry.item, entry.error.split("; ") if entry.error else [])
            generated.append(obj)
        doc = merge(initial, generated, self.schema)
        doc = self.debug_loop(doc, runlog)
        return doc, runlog

    # -- modification --------------------------------------------------------

    def plan(self, request: str, doc: IdfDocument) -> list[PlanEntry]:
        prompt = render_central_prompt(request, serialize(doc, self.schema), self.config.templates)
        current = prompt
        last_error = ""
        for attempt_no in (1, 2):
            response, _ = _ask(self.chat, current, self.config, f"central:plan:attempt{attempt_no}")
            try:
                return parse_central_plan(response)
            except ResponseParseError as exc:
                last_error = str(exc)
                current = _retry_prompt(prompt, [f"the plan could not be read: {exc}"])
        raise PlanFailed(last_error)

    def _run_job(self, doc: IdfDocument, job: PlanJob, tag: str) -> tuple[ObjectLog, IdfObject | None, tuple[str, str] | None]:
        od = object_def(self.schema, job.object_type)
        item = ExtractionItem(od.class_name, job.object_name, job.request)
        if job.action == "create":
            request = generation_request(item)
            prompt = render_generation_prompt(self.excerpt(od.class_name), request, self.config.templates, task_agent=True)
            entry, obj = self._generate_one(item, prompt, tag, action="create")
            return entry, obj, None
        hits = find_objects(doc, od.class_name, job.object_name, self.schema)
        if not hits:
            raise TargetNotFound(od.class_name, job.object_name)
        current = hits[0][1]
        prompt = render_modify_prompt(
            self.excerpt(od.class_name), serialize_object(current, self.schema), job.request, self.config.templates
        )
        entry = ObjectLog(item, action="modify")
        text = prompt
        for attempt_no in (1, 2):
            response, digest = _ask(self.chat, text, self.config, f"{tag}:attempt{attempt_no}")
            attempt = Attempt(digest)
            entry.attempts.append(attempt)
            try:
                parsed = parse_generated(response, [od.class_name])
            except ResponseParseError as exc:
                attempt.parse_error = str(exc)
                problems = [f"the answer must contain the modified {od.class_name} object"]
            else:
                same = [o for o in parsed.objects
                        if object_key(o, self.schema) == object_key(current, self.schema)]
                if len(same) == 1:
                    new = normalized_object(self.schema, same[0])
                    entry.objects = [(new.class_name, new.name)]
                    return entry, new, (od.class_name, current.name)
                problems = [f'the answer must contain exactly one {od.class_name} named "{current.name}"']
                attempt.violations = problems
            text = _retry_prompt(prompt, problems)
        entry.error = "; ".join(entry.attempts[-1].violations or [entry.attempts[-1].parse_error or ""])
        return entry, None, None

    def modify_idf(self, doc: IdfDocument, request: str) -> tuple[IdfDocument, RunLog]:
        if not request.strip():
            raise ValueError("modification request is empty")
        runlog = RunLog()
        plan = self.plan(request, doc)
        runlog.plan = plan
        for n, entry in enumerate(plan, start=1):
            staged = doc
            ok = True
            for m, job in enumerate(entry.jobs, start=1):
                tag = f"task:{n}.{m}:{job.action}:{job.object_type}:{job.object_name}"
                try:
                    obj_log, obj, target = self._run_job(staged, job, tag)
                except (IdfError, UnknownClass) as exc:
                    runlog.failures.append(f"entry {n} ({entry.sub_request}): {exc}")
                    ok = False
                    break
                runlog.per_object.append(obj_log)
                if obj is None:
                    runlog.failures.append(f"entry {n} ({entry.sub_request}): {obj_log.error}")
                    ok = False
                    break
                if target is None:
                    staged = merge(staged, [obj], self.schema)
                else:
                    staged = replace_objects(staged, [(target[0], target[1], obj)], self.schema)
            if ok:
                doc = staged
        doc = self._audit_repair(doc, runlog)
        return doc, runlog

    def _audit_repair(self, doc: IdfDocument, runlog: RunLog) -> IdfDocument:
        """Check references without a simulation and allow one repair round."""
        rules = [r for r in default_rules() if r.predicate in ("placeholder", "dangling-reference")]
        auditor = MockRunner(self.schema, rules)
        doc = self.substitute_placeholders(doc, runlog)
        report = auditor.run(doc)
        if not report.clean:
            doc = self._repair_round(doc, report, runlog, 1)
            report = auditor.run(doc)
        self._finish(runlog, report)
        return doc

    # -- repair loop ---------------------------------------------------------

    def substitute_placeholders(self, doc: IdfDocument, runlog: RunLog | None = None) -> IdfDocument:
        """Fill placeholders whose object-list has exactly one candidate in the document."""
        audit = reference_audit(doc, self.schema)
        if not audit.placeholders:
            return doc
        registry = reference_registry(doc, self.schema)
        originals = {}
        for obj in doc.objects:
            od = self.schema.get(obj.class_name)
            if od is None or not od.has_name_field:
                continue
            for lst in od.fields[0].references:
                originals.setdefault(lst, {}).setdefault(obj.name.upper(), obj.name)
        objects = list(doc.objects)
        for p in audit.placeholders:
            obj = objects[p.object_index]
            od = self.schema.get(obj.class_name)
            fd = od.field_at(p.ordinal) if od else None
            if fd is None or not fd.referenced_lists:
                continue
            candidates = set()
            for lst in fd.referenced_lists:
                candidates |= registry.get(lst, set())
            if len(candidates) != 1:
                continue
            upper = next(iter(candidates))
            value = next((originals[lst][upper] for lst in fd.referenced_lists
                          if upper in originals.get(lst, {})), upper)
            objects[p.object_index] = obj.with_value(p.ordinal, FieldValue.literal(value, obj.value(p.ordinal).comment))
            if runlog is not None:
                runlog.substitutions.append(Substitution(obj.class_name, obj.name, fd.name, p.token, value))
        return IdfDocument(tuple(objects), doc.leading_comments, doc.warnings)

    def _ask_repair(self, doc: IdfDocument, report: SimulationReport, index: int) -> tuple[RepairSet, str, bool]:
        prompt = render_repair_prompt(
            severe_fatal_digest(report.entries), serialize(doc, self.schema), self.config.templates
        )
        current = prompt
        first_digest = ""
        for attempt_no in (1, 2):
            response, digest = _ask(self.chat, current, self.config, f"agent3:round{index}:attempt{attempt_no}")
            first_digest = first_digest or digest
            try:
                repair = parse_repair(response, self.schema)
                if len(repair.targets) > self.config.max_objects_per_repair:
                    raise CountExceeded(
                        f"{len(repair.targets)} objects returned; at most {self.config.max_objects_per_repair} allowed"
                    )
                return repair, first_digest, attempt_no > 1
            except ResponseParseError as exc:
                problem = str(exc)
                current = _retry_prompt(prompt, [problem])
        raise RepairParseFailed(f"round {index}: {problem}")

    def _repair_round(self, doc: IdfDocument, report: SimulationReport, runlog: RunLog, index: int) -> IdfDocument:
        repair, digest, reprompted = self._ask_repair(doc, report, index)
        replacements, additions, targets, added = [], [], [], []
        for class_name, name, obj in repair.pairs(self.schema):
            obj = normalized_object(self.schema, obj)
            if find_objects(doc, class_name, name, self.schema):
                replacements.append((class_name, name, obj))
                targets.append((obj.class_name, name))
            else:
                additions.append(obj)
                added.append((obj.class_name, name))
                log.info("repair round %d adds %s %r", index, class_name, name)
        after = replace_objects(doc, replacements, self.schema)
        after = merge(after, additions, self.schema)
        runlog.repair_rounds.append(
            RepairRound(
                index=index,
                report_summary=report.summary(),
                severe_or_fatal=report.severe_or_fatal,
                prompt_digest=digest,
                targets=targets,
                added=added,
                diff=unified_diff(doc, after, self.schema),
                changed_indices=changed_objects(doc, after, self.schema),
                reprompted=reprompted,
            )
        )
        return after

    def _finish(self, runlog: RunLog, report: SimulationReport) -> None:
        runlog.final_report = report.summary()
        runlog.final_severe_or_fatal = report.severe_or_fatal
        if report.clean:
            runlog.outcome = Outcome.Clean
        elif report.severe_or_fatal == 0:
            runlog.outcome = Outcome.Aborted
        else:
            runlog.outcome = Outcome.MaxIterationsExceeded

    def debug_loop(self, doc: IdfDocument, runlog: RunLog | None = None) -> IdfDocument:
        """Simulate, repair and repeat until clean or out of rounds."""
        runlog = runlog if runlog is not None else RunLog()
        limit = self.config.max_repair_iterations
        index = 0
        while True:
            doc = self.substitute_placeholders(doc, runlog)
            report = self.runner.run(doc, self.config.weather_path)
            log.info("simulation after %d repair rounds: %s", index, report.summary())
            if report.clean or index >= limit:
                break
            if report.severe_or_fatal == 0:
                # the run failed without saying why; nothing for the repair agent to work from
                break
            index += 1
            doc = self._repair_round(doc, report, runlog, index)
        self._finish(runlog, report)
        if runlog.outcome is not Outcome.Clean and self.config.strict:
            raise RepairExhausted(f"{report.severe_or_fatal} severe/fatal errors remain after {index} repair rounds")
        return doc


# ---------------------------------------------------------------------------
# functional entry points


def generate_idf(description, initial_idf, config=None, *, schema, chat, runner=None):
    return Pipeline(schema, chat, runner, config).generate_idf(description, initial_idf)


def modify_idf(doc, request, config=None, *, schema, chat):
    return Pipeline(schema, chat, None, config).modify_idf(doc, request)


def debug_loop(doc, config=None, *, schema, chat, runner=None):
    runlog = RunLog()
    final = Pipeline(schema, chat, runner, config).debug_loop(doc, runlog)
    return final, runlog.repair_rounds, runlog
