"""Core value types for periodontal diagnoses.

The five diagnosis dimensions (status, stage, grade, extent, subtype) follow
the 2018 AAP/EFP classification. Every type here is an immutable value and
safe to share across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class _OrderedEnum(enum.Enum):
    """Enum whose members are totally ordered by definition order (ascending)."""

    @property
    def rank(self) -> int:
        return list(type(self)).index(self)

    def __lt__(self, other):
        if type(self) is type(other):
            return self.rank < other.rank
        return NotImplemented

    def __le__(self, other):
        if type(self) is type(other):
            return self.rank <= other.rank
        return NotImplemented

    def __gt__(self, other):
        if type(self) is type(other):
            return self.rank > other.rank
        return NotImplemented

    def __ge__(self, other):
        if type(self) is type(other):
            return self.rank >= other.rank
        return NotImplemented


class PeriodontalStatus(_OrderedEnum):
    """Overall periodontal condition, ascending severity."""

    HEALTH = "Health"
    GINGIVITIS = "Gingivitis"
    PERIODONTITIS = "Periodontitis"


class Stage(_OrderedEnum):
    """Periodontitis stage, ascending severity."""

    I = "I"
    II = "II"
    III = "III"
    IV = "IV"


class Grade(_OrderedEnum):
    """Periodontitis progression-risk grade, ascending."""

    A = "A"
    B = "B"
    C = "C"


class Extent(_OrderedEnum):
    """Spread of the condition; Generalized dominates in adjudication."""

    LOCALIZED = "Localized"
    GENERALIZED = "Generalized"


class Subtype(enum.Enum):
    """Periodontium state attached to gingivitis or health diagnoses."""

    INTACT_PERIODONTIUM = "Intact Periodontium"
    REDUCED_PERIODONTIUM_STABLE_PERIODONTITIS = "Reduced Periodontium, Stable Periodontitis"
    REDUCED_PERIODONTIUM_NON_PERIODONTITIS = "Reduced Periodontium, Non-Periodontitis"


class Dimension(enum.Enum):
    """The five annotated diagnosis dimensions."""

    STATUS = "Status"
    STAGE = "Stage"
    GRADE = "Grade"
    EXTENT = "Extent"
    SUBTYPE = "Subtype"


DIMENSIONS = (
    Dimension.STATUS,
    Dimension.STAGE,
    Dimension.GRADE,
    Dimension.EXTENT,
    Dimension.SUBTYPE,
)

#: Value enum for each dimension, in canonical class order.
DIMENSION_VALUES = {
    Dimension.STATUS: tuple(reversed(list(PeriodontalStatus))),
    Dimension.STAGE: tuple(Stage),
    Dimension.GRADE: tuple(Grade),
    Dimension.EXTENT: tuple(Extent),
    Dimension.SUBTYPE: tuple(Subtype),
}


def max_severity(a: PeriodontalStatus, b: PeriodontalStatus) -> PeriodontalStatus:
    """Return the more severe of two statuses (periodontitis dominates)."""
    return a if a >= b else b


def max_stage(a: Stage | None, b: Stage | None) -> Stage | None:
    """Join of two optional stages; absent acts as the bottom element."""
    if a is None:
        return b
    if b is None:
        return a
    return a if a >= b else b


def max_grade(a: Grade | None, b: Grade | None) -> Grade | None:
    """Join of two optional grades; absent acts as the bottom element."""
    if a is None:
        return b
    if b is None:
        return a
    return a if a >= b else b


def max_extent(a: Extent | None, b: Extent | None) -> Extent | None:
    """Join of two optional extents; Generalized dominates Localized."""
    if a is None:
        return b
    if b is None:
        return a
    return a if a >= b else b


@dataclass(frozen=True)
class DiagnosisRecord:
    """Normalized per-patient diagnosis over the five dimensions.

    Absent optional fields mean "left blank", not "unknown sentinel".
    Field legality depends on status; see :func:`validate_record`.
    """

    status: PeriodontalStatus
    stage: Stage | None = None
    grade: Grade | None = None
    extent: Extent | None = None
    subtype: Subtype | None = None

    def value_for(self, dimension: Dimension):
        return {
            Dimension.STATUS: self.status,
            Dimension.STAGE: self.stage,
            Dimension.GRADE: self.grade,
            Dimension.EXTENT: self.extent,
            Dimension.SUBTYPE: self.subtype,
        }[dimension]


def validate_record(record: DiagnosisRecord) -> list[str]:
    """Return every field-legality violation; an empty list means the record is valid.

    Violations are data, not faults: callers decide whether to raise.
    """
    violations: list[str] = []
    status = record.status
    if status is PeriodontalStatus.PERIODONTITIS:
        if record.subtype is not None:
            violations.append("subtype not permitted for periodontitis")
    elif status is PeriodontalStatus.GINGIVITIS:
        if record.stage is not None:
            violations.append("stage not permitted for gingivitis")
        if record.grade is not None:
            violations.append("grade not permitted for gingivitis")
    else:  # HEALTH
        if record.stage is not None:
            violations.append("stage not permitted for health")
        if record.grade is not None:
            violations.append("grade not permitted for health")
        if record.extent is not None:
            violations.append("extent not permitted for health")
    return violations


def is_valid_record(record: DiagnosisRecord) -> bool:
    return not validate_record(record)


@dataclass(frozen=True)
class EntitySpan:
    """A labeled character-offset span over note text, half-open [start, end).

    ``value`` holds the normalized enum value for the span's dimension;
    ``raw_text`` is the exact surface slice, typos and all.
    """

    dimension: Dimension
    value: object
    start: int
    end: int
    raw_text: str

    def __post_init__(self):
        if self.start < 0 or self.end <= self.start:
            raise ValueError(f"bad span offsets [{self.start}, {self.end})")


def span_violations(text: str, spans: list[EntitySpan]) -> list[str]:
    """Check spans against their note text: bounds, surface match, non-overlap."""
    problems: list[str] = []
    for s in spans:
        if s.end > len(text):
            problems.append(f"span [{s.start},{s.end}) exceeds text length {len(text)}")
            continue
        if text[s.start : s.end] != s.raw_text:
            problems.append(
                f"span [{s.start},{s.end}) raw_text {s.raw_text!r} does not match text"
            )
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            problems.append(
                f"span [{cur.start},{cur.end}) overlaps [{prev.start},{prev.end})"
            )
    return problems


@dataclass(frozen=True)
class Statement:
    """One diagnosis statement: the spans it produced and its hedge flag."""

    spans: tuple[EntitySpan, ...]
    hedged: bool = False
    start: int = 0
    end: int = 0


def parse_enum(cls, raw: str):
    """Strict parse of a serialized enum value ("Periodontitis", "III", ...)."""
    for member in cls:
        if member.value == raw:
            return member
    raise ValueError(f"{raw!r} is not a valid {cls.__name__}")
