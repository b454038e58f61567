"""Parser and query layer for the EnergyPlus Input Data Dictionary (IDD).

The IDD grammar is line oriented: a class header (``People,``) is followed by
object-level directives (``\\memo``, ``\\min-fields``...) and then field ids
(``A1 ,`` / ``N3 ;``) each trailed by their own directives.  ``!`` starts a
comment.  Every directive is kept in source order so a class can be written
back out (:func:`idd_excerpt`) and re-parsed into an equal definition.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from .errors import DanglingDirective, EmptyInput, MalformedHeader, UnknownClass

log = logging.getLogger(__name__)

KINDS = ("alpha", "numeric", "integer", "choice", "object-list-reference", "node")

_TYPE_TO_KIND = {
    "alpha": "alpha",
    "real": "numeric",
    "integer": "integer",
    "choice": "choice",
    "object-list": "object-list-reference",
    "node": "node",
    "external-list": "alpha",
    "handle": "alpha",
}

_CLASS_DIRECTIVES = {
    "memo",
    "unique-object",
    "required-object",
    "min-fields",
    "extensible",
    "format",
    "obsolete",
}

_FIELD_ID = re.compile(r"([AN])(\d+)\s*([,;])")
_DIRECTIVE = re.compile(r"\\([A-Za-z][A-Za-z-]*)(:|>|<)?(.*)$")

FIXTURE_IDD = "energyplus_23_2_subset.idd"


def normalize_name(name: str) -> str:
    return " ".join(name.split()).lower()


@dataclass(frozen=True)
class Bounds:
    minimum: float | None = None
    minimum_exclusive: bool = False
    maximum: float | None = None
    maximum_exclusive: bool = False

    def admits(self, value: float) -> bool:
        if self.minimum is not None:
            if value < self.minimum or (self.minimum_exclusive and value == self.minimum):
                return False
        if self.maximum is not None:
            if value > self.maximum or (self.maximum_exclusive and value == self.maximum):
                return False
        return True

    def describe(self) -> str:
        parts = []
        if self.minimum is not None:
            parts.append(f"{'>' if self.minimum_exclusive else '>='} {self.minimum:g}")
        if self.maximum is not None:
            parts.append(f"{'<' if self.maximum_exclusive else '<='} {self.maximum:g}")
        return " and ".join(parts)


@dataclass(frozen=True)
class FieldDef:
    ordinal: int
    field_id: str
    name: str
    kind: str
    required: bool = False
    default: str | None = None
    choices: tuple[str, ...] = ()
    bounds: Bounds | None = None
    units: str | None = None
    autosize_allowed: bool = False
    autocalculate_allowed: bool = False
    referenced_lists: tuple[str, ...] = ()
    references: tuple[str, ...] = ()
    directives: tuple[tuple[str, str], ...] = ()

    @property
    def is_numeric(self) -> bool:
        return self.kind in ("numeric", "integer")

    def choice_key(self, value: str) -> str | None:
        """Return the IDD spelling of ``value`` if it is one of the keys."""
        low = value.strip().lower()
        for key in self.choices:
            if key.lower() == low:
                return key
        return None


@dataclass(frozen=True)
class ObjectDef:
    class_name: str
    memo: tuple[str, ...] = ()
    min_fields: int = 0
    fields: tuple[FieldDef, ...] = ()
    extensible_group: int | None = None
    extensible_start: int | None = None
    unique: bool = False
    group: str | None = field(default=None, compare=False)
    directives: tuple[tuple[str, str], ...] = ()

    def field(self, name: str) -> FieldDef | None:
        key = normalize_name(name)
        for f in self.fields:
            if normalize_name(f.name) == key:
                return f
        return None

    def field_at(self, ordinal: int) -> FieldDef | None:
        """Field definition at a 1-based position, unrolling the extensible tail."""
        if 1 <= ordinal <= len(self.fields):
            return self.fields[ordinal - 1]
        if ordinal < 1 or not self.extensible_group or not self.extensible_start:
            return None
        k, start = self.extensible_group, self.extensible_start
        offset = ordinal - start
        template = self.fields[start - 1 + offset % k]
        rep = offset // k + 1
        name = re.sub(r"\d+", str(rep), template.name, count=1)
        return FieldDef(
            ordinal=ordinal,
            field_id=template.field_id[0] + "?",
            name=name,
            kind=template.kind,
            required=False,
            choices=template.choices,
            bounds=template.bounds,
            units=template.units,
            autosize_allowed=template.autosize_allowed,
            autocalculate_allowed=template.autocalculate_allowed,
            referenced_lists=template.referenced_lists,
            references=template.references,
        )

    @property
    def has_name_field(self) -> bool:
        return bool(self.fields) and self.fields[0].kind != "numeric" and self.fields[0].name.lower().endswith("name")

    @property
    def owns_name(self) -> bool:
        """True when the first field is the object's own Name, not a reference such as Zone Name."""
        return bool(self.fields) and normalize_name(self.fields[0].name) == "name"

    def admits_length(self, n: int) -> bool:
        if n <= len(self.fields):
            return True
        return self.extensible_group is not None


@dataclass
class IddSchema:
    version: str
    defs: dict[str, ObjectDef]
    object_lists: dict[str, set[tuple[str, int]]]
    unresolved_lists: set[str] = field(default_factory=set)
    warnings: list[str] = field(default_factory=list)

    def __contains__(self, class_name: str) -> bool:
        return normalize_name(class_name) in self.defs

    def get(self, class_name: str) -> ObjectDef | None:
        return self.defs.get(normalize_name(class_name))

    @property
    def class_names(self) -> list[str]:
        return [d.class_name for d in self.defs.values()]

    def list_classes(self, list_name: str) -> set[str]:
        """Class names whose objects populate ``list_name``."""
        return {c for c, _ in self.object_lists.get(list_name, set())}


# ---------------------------------------------------------------------------
# parsing


class _FieldBuilder:
    def __init__(self, ordinal: int, field_id: str):
        self.ordinal = ordinal
        self.field_id = field_id
        self.directives: list[tuple[str, str]] = []

    def build(self) -> FieldDef:
        name = self.field_id
        type_ = None
        required = False
        default = None
        keys: list[str] = []
        units = None
        lists: list[str] = []
        refs: list[str] = []
        autosize = autocalc = False
        lo = hi = None
        lo_x = hi_x = False
        for d, v in self.directives:
            if d == "field":
                name = v
            elif d == "type":
                type_ = v.lower()
            elif d == "required-field":
                required = True
            elif d == "default":
                default = v
            elif d == "key":
                keys.append(v)
            elif d == "units":
                units = v
            elif d == "object-list":
                lists.append(v)
            elif d == "reference":
                refs.append(v)
            elif d == "autosizable":
                autosize = True
            elif d == "autocalculatable":
                autocalc = True
            elif d in ("minimum", "minimum>"):
                lo, lo_x = _to_float(v), d.endswith(">")
            elif d in ("maximum", "maximum<"):
                hi, hi_x = _to_float(v), d.endswith("<")
        if type_ is not None:
            kind = _TYPE_TO_KIND.get(type_, "alpha")
        elif lists:
            kind = "object-list-reference"
        elif keys:
            kind = "choice"
        else:
            kind = "numeric" if self.field_id.startswith("N") else "alpha"
        bounds = None
        if kind in ("numeric", "integer") and (lo is not None or hi is not None):
            bounds = Bounds(lo, lo_x, hi, hi_x)
        return FieldDef(
            ordinal=self.ordinal,
            field_id=self.field_id,
            name=name,
            kind=kind,
            required=required,
            default=default,
            choices=tuple(keys) if kind == "choice" else (),
            bounds=bounds,
            units=units,
            autosize_allowed=autosize,
            autocalculate_allowed=autocalc,
            referenced_lists=tuple(lists),
            references=tuple(refs),
            directives=tuple(self.directives),
        )


class _ClassBuilder:
    def __init__(self, name: str, group: str | None):
        self.name = name
        self.group = group
        self.directives: list[tuple[str, str]] = []
        self.fields: list[_FieldBuilder] = []
        self.closed = False

    def build(self) -> ObjectDef:
        memo: list[str] = []
        min_fields = 0
        ext = None
        unique = False
        for d, v in self.directives:
            if d == "memo":
                memo.append(v)
            elif d == "min-fields":
                min_fields = int(_to_float(v) or 0)
            elif d == "extensible":
                m = re.match(r"\s*(\d+)", v)
                ext = int(m.group(1)) if m else None
            elif d == "unique-object":
                unique = True
        fields = tuple(fb.build() for fb in self.fields)
        start = None
        for f in fields:
            if any(d == "begin-extensible" for d, _ in f.directives):
                start = f.ordinal
                break
        if ext and start is None:
            start = max(1, len(fields) - ext + 1)
        return ObjectDef(
            class_name=self.name,
            memo=tuple(memo),
            min_fields=min_fields,
            fields=fields,
            extensible_group=ext,
            extensible_start=start if ext else None,
            unique=unique,
            group=self.group,
            directives=tuple(self.directives),
        )


def _to_float(text: str) -> float | None:
    try:
        return float(text.strip())
    except ValueError:
        return None


def _split_directive(text: str) -> tuple[str, str]:
    m = _DIRECTIVE.match(text.strip())
    if not m:
        return "", text
    name, suffix, rest = m.group(1), m.group(2), m.group(3)
    name = name.lower()
    if suffix in (">", "<"):
        name += suffix
    elif suffix == ":":
        # \extensible:4 keeps its count in the value
        return name, rest.strip()
    return name, rest.strip()


def parse_idd(source_text: str) -> IddSchema:
    """Parse IDD text into an :class:`IddSchema`.

    Raises:
        EmptyInput: the text holds no class definitions at all.
        MalformedHeader: a class line lacks its ``,``/``;`` terminator.
        DanglingDirective: a field-level directive precedes every field.
    """
    if not source_text or not source_text.strip():
        raise EmptyInput("IDD text is empty")

    version = ""
    group: str | None = None
    current: _ClassBuilder | None = None
    classes: list[_ClassBuilder] = []
    warnings: list[str] = []

    for line_no, raw in enumerate(source_text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("!"):
            m = re.match(r"!IDD_Version\s+(\S+)", stripped)
            if m:
                version = m.group(1)
            continue
        slash = stripped.find("\\")
        code = stripped if slash < 0 else stripped[:slash]
        directive = "" if slash < 0 else stripped[slash:]
        if "!" in code:
            code = code[: code.index("!")]
            directive = ""
        code = code.strip()

        if code:
            ids = list(_FIELD_ID.finditer(code))
            residue = _FIELD_ID.sub("", code).strip()
            if ids and not residue and current is not None and not current.closed:
                for m in ids:
                    fb = _FieldBuilder(len(current.fields) + 1, m.group(1) + m.group(2))
                    current.fields.append(fb)
                    if m.group(3) == ";":
                        current.closed = True
            else:
                if code[-1] not in ",;":
                    raise MalformedHeader(line_no, code)
                current = _ClassBuilder(code[:-1].strip(), group)
                current.closed = code[-1] == ";"
                classes.append(current)

        if not directive:
            continue
        name, value = _split_directive(directive)
        if not name:
            continue
        if name == "group":
            group = value
            continue
        if current is None:
            raise DanglingDirective(line_no, name)
        if name in _CLASS_DIRECTIVES and not current.fields:
            current.directives.append((name, value))
        elif not current.fields:
            raise DanglingDirective(line_no, name)
        else:
            current.fields[-1].directives.append((name, value))

    if not classes:
        raise EmptyInput("IDD text contains no class definitions")

    defs: dict[str, ObjectDef] = {}
    for cb in classes:
        od = cb.build()
        key = normalize_name(od.class_name)
        if key in defs:
            warnings.append(f"duplicate definition of class {od.class_name!r}; last one wins")
            log.warning(warnings[-1])
        defs[key] = od

    object_lists: dict[str, set[tuple[str, int]]] = {}
    for od in defs.values():
        for f in od.fields:
            for ref in f.references:
                object_lists.setdefault(ref, set()).add((od.class_name, f.ordinal))
    unresolved = {
        lst
        for od in defs.values()
        for f in od.fields
        for lst in f.referenced_lists
        if lst not in object_lists
    }
    return IddSchema(version, defs, object_lists, unresolved, warnings)


# ---------------------------------------------------------------------------
# queries


def _levenshtein(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def nearest_class(schema: IddSchema, class_name: str) -> str | None:
    key = normalize_name(class_name)
    best = min(schema.defs.values(), key=lambda d: (_levenshtein(key, normalize_name(d.class_name)), d.class_name), default=None)
    return best.class_name if best else None


def object_def(schema: IddSchema, class_name: str) -> ObjectDef:
    """Case- and whitespace-insensitive class lookup."""
    od = schema.get(class_name)
    if od is None:
        raise UnknownClass(class_name, nearest_class(schema, class_name))
    return od


def _directive_line(name: str, value: str) -> str:
    if name == "extensible":
        return f"\\extensible:{value}"
    if name.endswith((">", "<")):
        return f"\\{name} {value}".rstrip()
    return f"\\{name} {value}".rstrip()


def idd_excerpt(schema: IddSchema, class_name: str, extensible_groups: int | None = None) -> str:
    """Write one class back out in IDD syntax, e.g. for a generation prompt.

    With ``extensible_groups`` set, the repeating tail of an extensible class
    is cut after that many groups (Schedule:Compact lists 10 000 fields).
    The truncated text is still valid IDD but no longer round-trips.
    """
    od = object_def(schema, class_name)
    terminator = ";" if not od.fields else ","
    lines = [f"{od.class_name}{terminator}"]
    for name, value in od.directives:
        lines.append("       " + _directive_line(name, value))
    fields = od.fields
    if extensible_groups is not None and od.extensible_group and od.extensible_start:
        keep = od.extensible_start - 1 + extensible_groups * od.extensible_group
        fields = fields[:keep]
    last = len(fields)
    for f in fields:
        sep = ";" if f.ordinal == last else ","
        head = f"  {f.field_id}{sep}"
        if not f.directives:
            lines.append(head)
            continue
        first, *rest = f.directives
        lines.append(f"{head:<7} {_directive_line(*first)}")
        for name, value in rest:
            lines.append("        " + _directive_line(name, value))
    return "\n".join(lines) + "\n"


@lru_cache(maxsize=1)
def load_fixture_schema() -> IddSchema:
    """The IDD subset shipped with the package (EnergyPlus 23.2.0 definitions)."""
    text = resources.files("bemllm.data").joinpath(FIXTURE_IDD).read_text(encoding="utf-8")
    return parse_idd(text)


def load_schema(path: str | None = None) -> IddSchema:
    if path is None:
        return load_fixture_schema()
    with open(path, encoding="latin-1") as fh:
        return parse_idd(fh.read())
