"""Deterministic rules for single-object generation.

Given a class and the fields a user asked for, every field of the object is
classified in IDD order:

* assigned by the user      -> literal value           (``user_set``)
* required, not assigned    -> ``TBD`` + 10 digits     (``mandatory_undefined``)
* has an IDD default        -> the default             (``defaulted``)
* anything else             -> blank                   (``left_blank``)

The same classification is used to check an object written by a language
model (:func:`validate_generated`).
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Mapping

from .errors import AssignmentError, AssignmentOutOfBounds, ChoiceMismatch, UnknownField
from .idd import FieldDef, IddSchema, ObjectDef, normalize_name, object_def
from .idf import FieldValue, IdfObject, is_placeholder

USER = "user_set"
MANDATORY = "mandatory_undefined"
DEFAULT = "defaulted"
BLANK = "left_blank"
CATEGORIES = (USER, MANDATORY, DEFAULT, BLANK)

RATIONALE = {
    USER: "Defined by user",
    MANDATORY: "Mandatory but not defined by user, so set to a TBD placeholder",
    DEFAULT: "Default value used as it's not defined by user",
    BLANK: "Not mandatory and not defined by user, so left blank",
}

SUMMARY_LABELS = {
    USER: "Fields set by user",
    MANDATORY: "Mandatory fields not defined",
    DEFAULT: "Fields set to default values",
    BLANK: "Fields left blank",
}

_AUTO_WORDS = {"autosize", "autocalculate"}


# ---------------------------------------------------------------------------
# placeholders


class PlaceholderSource:
    """Seedable generator of ``TBD`` tokens that never repeats a token."""

    def __init__(self, seed: int | None = 0):
        self._rng = random.Random(seed)
        self._issued: set[str] = set()

    def reserve(self, tokens) -> None:
        """Mark tokens already present in a document as taken."""
        self._issued.update(tokens)

    def next(self) -> str:
        while True:
            token = f"TBD{self._rng.randrange(10**10):010d}"
            if token not in self._issued:
                self._issued.add(token)
                return token


def make_placeholder(source: PlaceholderSource) -> str:
    return source.next()


# ---------------------------------------------------------------------------
# specs and reports


@dataclass(frozen=True)
class GenerationSpec:
    class_name: str
    assignments: dict[str, str] = field(default_factory=dict)
    free_text: str | None = None

    @classmethod
    def create(
        cls,
        schema: IddSchema,
        class_name: str,
        assignments: Mapping[str, object] | None = None,
        free_text: str | None = None,
    ) -> GenerationSpec:
        """Build a spec, resolving field names against the schema.

        Keys are matched case-insensitively and rewritten to the IDD display
        name; unknown keys raise :class:`UnknownField`.
        """
        od = object_def(schema, class_name)
        resolved: dict[str, str] = {}
        for key, value in (assignments or {}).items():
            fd = od.field(key)
            if fd is None:
                raise UnknownField(f"{od.class_name} has no field {key!r}")
            resolved[fd.name] = format_value(value)
        return cls(od.class_name, resolved, free_text)


@dataclass
class FieldReport:
    user_set: list[str] = field(default_factory=list)
    mandatory_undefined: list[str] = field(default_factory=list)
    defaulted: list[str] = field(default_factory=list)
    left_blank: list[str] = field(default_factory=list)

    def category(self, name: str) -> str | None:
        for cat in CATEGORIES:
            if name in getattr(self, cat):
                return cat
        return None

    def add(self, category: str, name: str) -> None:
        getattr(self, category).append(name)

    def as_sets(self) -> dict[str, set[str]]:
        return {cat: set(getattr(self, cat)) for cat in CATEGORIES}

    @property
    def emitted(self) -> list[str]:
        return [n for cat in CATEGORIES for n in getattr(self, cat)]


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str
    expected: str
    found: str

    def __str__(self) -> str:
        return f"{self.field}: expected {self.rule} {self.expected!r}, found {self.found!r}"


@dataclass
class ValidationResult:
    report: FieldReport
    violations: list[Violation]
    realigned: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations


# ---------------------------------------------------------------------------
# value formatting


def format_number(value: float) -> str:
    """Shortest decimal text that reads back as the same float."""
    if value == 0:
        return "0"
    if float(value).is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(float(value))


def format_value(value: object) -> str:
    if isinstance(value, bool):
        return "Yes" if value else "No"
    if isinstance(value, (int, float)):
        return format_number(float(value))
    return str(value).strip()


def _default_text(fd: FieldDef) -> str | None:
    if fd.default is None:
        return None
    if fd.kind == "choice":
        return fd.choice_key(fd.default) or fd.default
    if fd.is_numeric:
        try:
            return format_number(float(fd.default))
        except ValueError:
            return fd.default
    return fd.default


def _checked_value(fd: FieldDef, class_name: str, raw: str) -> str:
    text = raw.strip()
    if not text:
        raise AssignmentError(f"{class_name}.{fd.name}: empty assignment")
    if is_placeholder(text):
        return text
    if fd.kind == "choice":
        key = fd.choice_key(text)
        if key is None:
            raise ChoiceMismatch(f"{class_name}.{fd.name}: {text!r} is not one of {', '.join(fd.choices)}")
        return key
    if fd.is_numeric:
        low = text.lower()
        if low in _AUTO_WORDS:
            allowed = fd.autosize_allowed if low == "autosize" else fd.autocalculate_allowed
            if not allowed:
                raise AssignmentError(f"{class_name}.{fd.name} does not accept {text}")
            return low
        try:
            number = float(text)
        except ValueError:
            raise AssignmentError(f"{class_name}.{fd.name}: {text!r} is not a number") from None
        if not math.isfinite(number):
            raise AssignmentError(f"{class_name}.{fd.name}: {text!r} is not finite")
        if fd.kind == "integer" and not number.is_integer():
            raise AssignmentError(f"{class_name}.{fd.name}: {text!r} is not an integer")
        if fd.bounds is not None and not fd.bounds.admits(number):
            raise AssignmentOutOfBounds(f"{class_name}.{fd.name}: {text} violates {fd.bounds.describe()}")
        return format_number(number)
    if re.search(r"[,;!]", text):
        raise AssignmentError(f"{class_name}.{fd.name}: {text!r} contains a separator")
    return text


# ---------------------------------------------------------------------------
# forging


def emitted_length(od: ObjectDef, assigned_ordinals) -> int:
    """How many fields an object of this class is written with."""
    if not od.extensible_group:
        return len(od.fields)
    floor = (od.extensible_start or len(od.fields) + 1) - 1
    return max([od.min_fields, floor, *assigned_ordinals])


def expected_categories(od: ObjectDef, spec: GenerationSpec, fill_defaults: bool = True):
    """Yield ``(FieldDef, category, value or None)`` for every emitted field."""
    by_ordinal: dict[int, str] = {}
    for name, value in spec.assignments.items():
        fd = od.field(name)
        if fd is None:
            raise UnknownField(f"{od.class_name} has no field {name!r}")
        by_ordinal[fd.ordinal] = _checked_value(fd, od.class_name, value)
    for ordinal in range(1, emitted_length(od, by_ordinal) + 1):
        fd = od.field_at(ordinal)
        if ordinal in by_ordinal:
            yield fd, USER, by_ordinal[ordinal]
        elif fd.required:
            yield fd, MANDATORY, None
        elif fill_defaults and fd.default is not None:
            yield fd, DEFAULT, _default_text(fd)
        else:
            yield fd, BLANK, None


def forge_object(
    schema: IddSchema,
    spec: GenerationSpec,
    randomness: PlaceholderSource | None = None,
    fill_defaults: bool = True,
) -> tuple[IdfObject, FieldReport]:
    """Build the object a rule-following generator must produce for ``spec``.

    ``fill_defaults=False`` leaves optional fields blank even when the IDD
    has a default (the stricter reading of the generation rules).
    """
    od = object_def(schema, spec.class_name)
    source = randomness if randomness is not None else PlaceholderSource()
    report = FieldReport()
    values = []
    for fd, cat, value in expected_categories(od, spec, fill_defaults):
        comment = f"{fd.name} - {RATIONALE[cat]}"
        if cat == MANDATORY:
            values.append(FieldValue.placeholder(make_placeholder(source), comment))
        elif value is None:
            values.append(FieldValue.blank(comment))
        else:
            values.append(FieldValue.literal(value, comment))
        report.add(cat, fd.name)
    return IdfObject(od.class_name, tuple(values)), report


# ---------------------------------------------------------------------------
# validation

_UNITS_SUFFIX = re.compile(r"\s*[\{\(\[][^\}\)\]]*[\}\)\]]\s*$")


def _comment_label(comment: str | None) -> str | None:
    if not comment:
        return None
    label = comment.split(" - ", 1)[0]
    label = _UNITS_SUFFIX.sub("", label.strip())
    return label or None


def align_values(od: ObjectDef, obj: IdfObject) -> tuple[dict[int, FieldValue], bool]:
    """Map IDD ordinals to the object's values.

    Generated objects name each field in their ``!-`` comment.  When every
    comment resolves to a distinct field of the class, in increasing order,
    the values are placed by those names; fields the object skipped count as
    blank.  Otherwise values are taken by position.
    """
    ordinals = []
    for v in obj.values:
        label = _comment_label(v.comment)
        fd = od.field(label) if label else None
        if fd is None:
            break
        ordinals.append(fd.ordinal)
    by_label = (
        len(ordinals) == len(obj.values)
        and bool(ordinals)
        and all(a < b for a, b in zip(ordinals, ordinals[1:]))
    )
    if by_label and ordinals != list(range(1, len(ordinals) + 1)):
        return dict(zip(ordinals, obj.values)), True
    return {i: v for i, v in enumerate(obj.values, start=1)}, False


def _decimal_places(text: str) -> tuple[int, int] | None:
    try:
        d = Decimal(text)
    except InvalidOperation:
        return None
    t = d.as_tuple()
    if not isinstance(t.exponent, int):
        return None
    return -t.exponent, len(t.digits)


def numbers_match(expected: str, found: str) -> bool:
    """Numeric equality that tolerates a value written to fewer decimals.

    ``15.6`` matches an expected ``15.56`` because rounding the expected value
    to one decimal gives the found text; at least three significant digits
    are required so that ``2`` does not match ``1.6``.
    """
    try:
        e, f = float(expected), float(found)
    except ValueError:
        return False
    if math.isclose(e, f, rel_tol=1e-9, abs_tol=0.0):
        return True
    places = _decimal_places(found.strip())
    if places is None:
        return False
    decimals, digits = places
    return digits >= 3 and decimals >= 0 and math.isclose(round(e, decimals), f, rel_tol=1e-12)


def values_match(fd: FieldDef, expected: str, found: str) -> bool:
    if expected.strip().lower() == found.strip().lower():
        return True
    if fd.is_numeric:
        return numbers_match(expected, found)
    return False


def validate_generated(
    schema: IddSchema,
    obj: IdfObject,
    spec: GenerationSpec,
    fill_defaults: bool = True,
) -> ValidationResult:
    """Check an object produced by a model against the rules for ``spec``.

    Placeholders are compared by shape, not value.  The report describes the
    object as found; it is only authoritative when there are no violations.
    """
    if normalize_name(obj.class_name) != normalize_name(spec.class_name):
        raise ValueError(f"object is {obj.class_name}, spec is for {spec.class_name}")
    od = object_def(schema, spec.class_name)
    found, realigned = align_values(od, obj)
    report = FieldReport()
    violations: list[Violation] = []
    seen = set()
    for fd, cat, value in expected_categories(od, spec, fill_defaults):
        seen.add(fd.ordinal)
        got = found.get(fd.ordinal, FieldValue.blank())
        if cat == USER:
            ok = values_match(fd, value, got.text)
            expected = value
        elif cat == MANDATORY:
            ok = got.is_placeholder
            expected = "TBD##########"
        elif cat == DEFAULT:
            ok = values_match(fd, value, got.text)
            expected = value
        else:
            ok = got.is_blank
            expected = ""
        if ok:
            report.add(cat, fd.name)
        else:
            violations.append(Violation(fd.name, _RULE_NAMES[cat], expected, got.text))
    for ordinal in sorted(set(found) - seen):
        got = found[ordinal]
        if got.is_blank:
            continue
        fd = od.field_at(ordinal)
        name = fd.name if fd is not None else f"field {ordinal}"
        violations.append(Violation(name, "blank", "", got.text))
    return ValidationResult(report, violations, realigned)


_RULE_NAMES = {USER: "user value", MANDATORY: "placeholder", DEFAULT: "default", BLANK: "blank"}


# ---------------------------------------------------------------------------
# summary text


def summary_text(report: FieldReport) -> str:
    lines = []
    for cat in CATEGORIES:
        names = getattr(report, cat)
        body = ", ".join(f'"{n}"' for n in names) if names else "(none)"
        lines.append(f"{SUMMARY_LABELS[cat]}: {body}")
    return "\n".join(lines) + "\n"


_QUOTED = re.compile(r'"([^"]*)"')
_SECTION = re.compile(
    r"(?im)^[\s*#-]*(" + "|".join(re.escape(v) for v in SUMMARY_LABELS.values()) + r")\s*:"
)


def parse_summary(text: str) -> FieldReport | None:
    """Read the four-section summary back; ``None`` if no section is present.

    Section bodies may wrap over several lines, including inside a quoted
    field name.  The last section ends at the first blank line after it.
    """
    matches = list(_SECTION.finditer(text))
    if not matches:
        return None
    labels = {normalize_name(v): k for k, v in SUMMARY_LABELS.items()}
    report = FieldReport()
    for m, nxt in zip(matches, matches[1:] + [None]):
        body = text[m.end() : nxt.start() if nxt else len(text)]
        if nxt is None:
            body = re.split(r"\n\s*\n", body.strip("\n"), maxsplit=1)[0]
        for name in _QUOTED.findall(body):
            report.add(labels[normalize_name(m.group(1))], " ".join(name.split()))
    return report
