"""EnergyPlus input files: parsing, serialization, merging and reference audits."""

from __future__ import annotations

import difflib
import logging
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .errors import AmbiguousTarget, StrayText, TargetNotFound, UnterminatedObject
from .idd import IddSchema, normalize_name

log = logging.getLogger(__name__)

PLACEHOLDER = re.compile(r"^TBD[0-9]{10}$")
_STRUCTURAL = re.compile(r"[,;!]")

COMMENT_COLUMN = 27


def is_placeholder(text: str) -> bool:
    return bool(PLACEHOLDER.match(text))


@dataclass(frozen=True)
class FieldValue:
    """One field of an object.

    ``text`` is empty for a blank field.  A value is a placeholder iff its
    text is ``TBD`` plus exactly ten digits.  ``comment`` holds the ``!-``
    annotation and takes no part in equality.
    """

    text: str = ""
    comment: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if _STRUCTURAL.search(self.text):
            raise ValueError(f"field text may not contain ',', ';' or '!': {self.text!r}")

    @classmethod
    def blank(cls, comment: str | None = None) -> FieldValue:
        return cls("", comment)

    @classmethod
    def literal(cls, text: str, comment: str | None = None) -> FieldValue:
        return cls(text.strip(), comment)

    @classmethod
    def placeholder(cls, token: str, comment: str | None = None) -> FieldValue:
        if not is_placeholder(token):
            raise ValueError(f"not a placeholder token: {token!r}")
        return cls(token, comment)

    @property
    def kind(self) -> str:
        if not self.text:
            return "blank"
        if is_placeholder(self.text):
            return "placeholder"
        return "literal"

    @property
    def is_blank(self) -> bool:
        return not self.text

    @property
    def is_placeholder(self) -> bool:
        return is_placeholder(self.text)


@dataclass(frozen=True)
class IdfObject:
    class_name: str
    values: tuple[FieldValue, ...] = ()
    source_span: tuple[int, int] | None = field(default=None, compare=False)

    @classmethod
    def of(cls, class_name: str, *texts: str) -> IdfObject:
        return cls(class_name, tuple(FieldValue.literal(t) if t else FieldValue.blank() for t in texts))

    @property
    def name(self) -> str:
        return self.values[0].text if self.values else ""

    def value(self, ordinal: int) -> FieldValue:
        if 1 <= ordinal <= len(self.values):
            return self.values[ordinal - 1]
        return FieldValue.blank()

    def texts(self) -> list[str]:
        return [v.text for v in self.values]

    def with_value(self, ordinal: int, value: FieldValue) -> IdfObject:
        vals = list(self.values)
        while len(vals) < ordinal:
            vals.append(FieldValue.blank())
        vals[ordinal - 1] = value
        return replace(self, values=tuple(vals))


@dataclass(frozen=True)
class IdfDocument:
    objects: tuple[IdfObject, ...] = ()
    leading_comments: tuple[str, ...] = field(default=(), compare=False)
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.objects)

    def __iter__(self):
        return iter(self.objects)

    def classes(self) -> list[str]:
        return [o.class_name for o in self.objects]

    def of_class(self, class_name: str) -> list[IdfObject]:
        key = normalize_name(class_name)
        return [o for o in self.objects if normalize_name(o.class_name) == key]


# ---------------------------------------------------------------------------
# identity


def object_key(obj: IdfObject, schema: IddSchema | None = None) -> tuple[str, str]:
    """``(class, name)`` identity, both normalized.

    Classes whose first IDD field is not a name (Version, Timestep...) are
    identified by class alone.
    """
    cls = normalize_name(obj.class_name)
    if schema is not None:
        od = schema.get(obj.class_name)
        if od is not None and not od.has_name_field:
            return cls, ""
    return cls, obj.name.strip().lower()


def find_objects(
    doc: IdfDocument, class_name: str, name: str | None = None, schema: IddSchema | None = None
) -> list[tuple[int, IdfObject]]:
    cls = normalize_name(class_name)
    hits = []
    for i, obj in enumerate(doc.objects):
        k_cls, k_name = object_key(obj, schema)
        if k_cls != cls:
            continue
        if name is not None and k_name != name.strip().lower() and k_name != "":
            continue
        hits.append((i, obj))
    return hits


# ---------------------------------------------------------------------------
# parsing


def parse_idf(source_text: str) -> IdfDocument:
    """Parse IDF text.

    Fields are split on commas, objects end at semicolons, and everything
    after ``!`` on a line is a comment.  A ``!-`` comment is attached to the
    last field completed on its line.
    """
    objects: list[IdfObject] = []
    leading: list[str] = []

    cls: str | None = None
    cls_line = 0
    values: list[FieldValue] = []
    buf: list[str] = []
    buf_line: int | None = None

    def flush(line_no: int) -> str:
        nonlocal buf, buf_line
        token = "".join(buf).strip()
        buf = []
        buf_line = None
        return token

    for line_no, line in enumerate(source_text.splitlines(), start=1):
        code, bang, comment = line.partition("!")
        comment = comment.strip()
        if not code.strip() and bang and cls is None and not objects and not buf:
            leading.append(comment)
            continue

        completed_here: list[int] = []
        for ch in code:
            if ch in ",;":
                token = flush(line_no)
                if cls is None:
                    if not token:
                        raise StrayText(line_no, ch)
                    cls, cls_line = token, line_no
                else:
                    values.append(FieldValue(token))
                    completed_here.append(len(values) - 1)
                if ch == ";":
                    objects.append(IdfObject(cls, tuple(values), (cls_line, line_no)))
                    cls, values = None, []
                    completed_here = []
                    last_obj_idx = len(objects) - 1
                    if comment.startswith("-"):
                        _attach_last(objects, last_obj_idx, comment)
                    comment = ""
            else:
                if not ch.isspace():
                    if buf_line is not None and buf_line != line_no and "".join(buf).strip():
                        raise StrayText(buf_line, "".join(buf).strip())
                    if buf_line is None or not "".join(buf).strip():
                        buf_line = line_no
                buf.append(ch)
        if buf and "".join(buf).strip():
            buf.append(" ")
        if comment.startswith("-") and completed_here:
            idx = completed_here[-1]
            values[idx] = FieldValue(values[idx].text, comment[1:].strip())

    leftover = "".join(buf).strip()
    if cls is not None:
        raise UnterminatedObject(cls_line, cls)
    if leftover:
        raise StrayText(buf_line or 0, leftover)
    return IdfDocument(tuple(objects), tuple(leading))


def _attach_last(objects: list[IdfObject], idx: int, comment: str) -> None:
    obj = objects[idx]
    if not obj.values:
        return
    last = obj.values[-1]
    vals = obj.values[:-1] + (FieldValue(last.text, comment[1:].strip()),)
    objects[idx] = IdfObject(obj.class_name, vals, obj.source_span)


# ---------------------------------------------------------------------------
# serialization


def _canonical_comment(label: str, source: str | None) -> str:
    """Schema label, keeping a trailing `` - rationale`` from the source comment."""
    if source:
        norm_src = " ".join(source.split())
        base = label.split(" {")[0]
        if norm_src.lower().startswith(base.lower()):
            rest = norm_src[len(base):].lstrip()
            if rest.startswith("{"):
                rest = rest[rest.find("}") + 1:].lstrip() if "}" in rest else ""
            if rest.startswith("-"):
                rationale = rest[1:].strip()
                if rationale:
                    return f"{label} - {rationale}"
    return label


def serialize_object(obj: IdfObject, schema: IddSchema | None = None) -> str:
    if not obj.values:
        return f"{obj.class_name};\n"
    od = schema.get(obj.class_name) if schema is not None else None
    lines = [f"{obj.class_name},"]
    last = len(obj.values)
    for i, v in enumerate(obj.values, start=1):
        sep = ";" if i == last else ","
        head = f"  {v.text}{sep}"
        comment = v.comment
        if od is not None:
            fd = od.field_at(i)
            if fd is not None:
                label = fd.name + (f" {{{fd.units}}}" if fd.units else "")
                comment = _canonical_comment(label, v.comment)
        if comment:
            lines.append(f"{head:<{COMMENT_COLUMN - 1}} !- {comment}")
        else:
            lines.append(head)
    return "\n".join(lines) + "\n"


def serialize(doc: IdfDocument, schema: IddSchema | None = None) -> str:
    """Render a document as IDF text, one field per line.

    With a schema, every ``!-`` comment is rewritten to the IDD display name
    (plus units); any ``- rationale`` suffix of the original comment is kept.
    """
    parts = []
    if doc.leading_comments:
        parts.append("\n".join(f"!{c}" if c.startswith(" ") or not c else f"! {c}" for c in doc.leading_comments) + "\n")
    parts.extend(serialize_object(o, schema) for o in doc.objects)
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# document edits


def merge(base: IdfDocument, additions: Sequence[IdfObject], schema: IddSchema | None = None) -> IdfDocument:
    """Append ``additions`` in order; duplicates are kept and reported as warnings."""
    seen = {object_key(o, schema) for o in base.objects}
    warnings = list(base.warnings)
    for obj in additions:
        key = object_key(obj, schema)
        if key[1] and key in seen:
            msg = f"duplicate {obj.class_name} {obj.name!r} after merge"
            warnings.append(msg)
            log.warning(msg)
        seen.add(key)
    return IdfDocument(base.objects + tuple(additions), base.leading_comments, tuple(warnings))


def replace_objects(
    doc: IdfDocument,
    repairs: Iterable[tuple[str, str, IdfObject]],
    schema: IddSchema | None = None,
) -> IdfDocument:
    """Swap out exactly the named objects; everything else is left untouched."""
    objects = list(doc.objects)
    for class_name, name, new in repairs:
        hits = [i for i, o in enumerate(doc.objects) if _matches(o, class_name, name, schema)]
        if not hits:
            raise TargetNotFound(class_name, name)
        if len(hits) > 1:
            raise AmbiguousTarget(class_name, name, len(hits))
        objects[hits[0]] = new
    return IdfDocument(tuple(objects), doc.leading_comments, doc.warnings)


def _matches(obj: IdfObject, class_name: str, name: str, schema: IddSchema | None) -> bool:
    k_cls, k_name = object_key(obj, schema)
    return k_cls == normalize_name(class_name) and k_name == name.strip().lower()


def changed_objects(before: IdfDocument, after: IdfDocument, schema: IddSchema | None = None) -> list[int]:
    """Indices (in ``after``) whose serialized text differs from ``before``."""
    out = []
    for i, obj in enumerate(after.objects):
        if i >= len(before.objects) or serialize_object(before.objects[i], schema) != serialize_object(obj, schema):
            out.append(i)
    return out


def unified_diff(before: IdfDocument, after: IdfDocument, schema: IddSchema | None = None) -> str:
    a = serialize(before, schema).splitlines(keepends=True)
    b = serialize(after, schema).splitlines(keepends=True)
    return "".join(difflib.unified_diff(a, b, "before.idf", "after.idf"))


def trim_trailing_blanks(doc: IdfDocument, schema: IddSchema) -> IdfDocument:
    """Drop blank fields after the last non-blank one, down to each class's minimum.

    A trailing blank and an absent field mean the same thing in IDF, but
    recent EnergyPlus releases resolve written blanks in object-list fields
    (such as unused Construction layers) as references to an empty name.
    """
    out = []
    for obj in doc.objects:
        od = schema.get(obj.class_name)
        keep = od.min_fields if od is not None else 0
        values = list(obj.values)
        while len(values) > max(keep, 1) and values[-1].is_blank:
            values.pop()
        out.append(obj if len(values) == len(obj.values) else IdfObject(obj.class_name, tuple(values), obj.source_span))
    return IdfDocument(tuple(out), doc.leading_comments, doc.warnings)


# ---------------------------------------------------------------------------
# reference audit


@dataclass(frozen=True)
class DanglingReference:
    object_index: int
    ordinal: int
    name: str
    expected_lists: tuple[str, ...]


@dataclass(frozen=True)
class PlaceholderEntry:
    object_index: int
    ordinal: int
    token: str


@dataclass
class ReferenceAudit:
    dangling: list[DanglingReference] = field(default_factory=list)
    placeholders: list[PlaceholderEntry] = field(default_factory=list)
    skipped_classes: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.dangling and not self.placeholders


def reference_registry(doc: IdfDocument, schema: IddSchema) -> dict[str, set[str]]:
    """Object-list name -> upper-cased names registered by the document."""
    registry: dict[str, set[str]] = {}
    for obj in doc.objects:
        od = schema.get(obj.class_name)
        if od is None:
            continue
        for i, v in enumerate(obj.values, start=1):
            fd = od.field_at(i)
            if fd is None or not fd.references or v.is_blank:
                continue
            for lst in fd.references:
                registry.setdefault(lst, set()).add(v.text.upper())
    return registry


def reference_audit(doc: IdfDocument, schema: IddSchema) -> ReferenceAudit:
    """Find references that name no object of the expected lists, and all placeholders."""
    audit = ReferenceAudit()
    registry = reference_registry(doc, schema)
    for idx, obj in enumerate(doc.objects):
        od = schema.get(obj.class_name)
        if od is None:
            if obj.class_name not in audit.skipped_classes:
                audit.skipped_classes.append(obj.class_name)
                log.warning("no IDD definition for %s; skipped in audit", obj.class_name)
            for i, v in enumerate(obj.values, start=1):
                if v.is_placeholder:
                    audit.placeholders.append(PlaceholderEntry(idx, i, v.text))
            continue
        for i, v in enumerate(obj.values, start=1):
            if v.is_placeholder:
                audit.placeholders.append(PlaceholderEntry(idx, i, v.text))
                continue
            fd = od.field_at(i)
            if fd is None or fd.kind != "object-list-reference" or v.is_blank:
                continue
            lists = tuple(lst for lst in fd.referenced_lists if lst in schema.object_lists)
            if not lists:
                continue
            known = set().union(*(registry.get(lst, set()) for lst in lists))
            if v.text.upper() not in known:
                audit.dangling.append(DanglingReference(idx, i, v.text, lists))
    return audit
