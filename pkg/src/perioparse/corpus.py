"""Corpus files, cohort eligibility, and the deterministic train/val/test split.

Corpora are UTF-8 line-delimited JSON, one note per line, so they stream and
diff cleanly. Note text survives read/write round trips byte-exactly.
"""

from __future__ import annotations

import enum
import json
import math
import os
import random
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

from .model import (
    DiagnosisRecord,
    Dimension,
    EntitySpan,
    Extent,
    Grade,
    PeriodontalStatus,
    Stage,
    Subtype,
    parse_enum,
    span_violations,
    validate_record,
)
from .normalization import GuidelineVersion

PARTITIONS = ("train", "validation", "test")


class CorpusFormatError(ValueError):
    """A corpus or manifest file violated the expected format."""


class Provenance(enum.Enum):
    REAL = "Real"
    LLM_GENERATED = "LLMGenerated"
    OFFLINE_GENERATED = "OfflineGenerated"


class AnnotationSource(enum.Enum):
    GOLD = "Gold"
    PREDICTED = "Predicted"
    EMBEDDED = "Embedded"


@dataclass(frozen=True)
class Note:
    note_id: str
    site_id: str
    text: str
    provenance: Provenance = Provenance.REAL

    def __post_init__(self):
        if not self.note_id:
            raise ValueError("note_id must be non-empty")


@dataclass(frozen=True)
class PatientMeta:
    """Cohort-eligibility inputs recorded alongside a note."""

    age: int
    natural_teeth_count: int
    has_full_mouth_radiographs: bool
    has_periodontal_charting: bool

    def __post_init__(self):
        if self.age < 0:
            raise ValueError("age must be non-negative")
        if not 0 <= self.natural_teeth_count <= 32:
            raise ValueError("natural_teeth_count must be within [0, 32]")


@dataclass(frozen=True)
class AnnotatedNote:
    """A note plus its standoff spans and (optionally) a normalized record."""

    note: Note
    spans: tuple[EntitySpan, ...] = ()
    record: DiagnosisRecord | None = None
    annotation_source: AnnotationSource = AnnotationSource.GOLD
    meta: PatientMeta | None = None
    guideline_version: GuidelineVersion | None = None
    qa: dict | None = None

    def with_(self, **changes) -> "AnnotatedNote":
        return replace(self, **changes)


def cohort_filter(meta: PatientMeta) -> bool:
    """Eligibility: 16 or older, 10 or more natural teeth, full radiographs, full charting."""
    return (
        meta.age >= 16
        and meta.natural_teeth_count >= 10
        and meta.has_full_mouth_radiographs
        and meta.has_periodontal_charting
    )


# --------------------------------------------------------------------------
# serialization

_VALUE_CLASSES = {
    Dimension.STATUS: PeriodontalStatus,
    Dimension.STAGE: Stage,
    Dimension.GRADE: Grade,
    Dimension.EXTENT: Extent,
    Dimension.SUBTYPE: Subtype,
}


def span_to_obj(span: EntitySpan) -> dict:
    return {
        "dimension": span.dimension.value,
        "value": span.value.value,
        "start": span.start,
        "end": span.end,
    }


def _span_from_obj(obj: dict, text: str) -> EntitySpan:
    dimension = parse_enum(Dimension, obj["dimension"])
    value = parse_enum(_VALUE_CLASSES[dimension], obj["value"])
    start, end = int(obj["start"]), int(obj["end"])
    if not 0 <= start < end <= len(text):
        raise ValueError(f"span offsets [{start},{end}) out of bounds")
    return EntitySpan(dimension, value, start, end, text[start:end])


def record_to_obj(record: DiagnosisRecord | None) -> dict | None:
    if record is None:
        return None
    return {
        "status": record.status.value,
        "stage": record.stage.value if record.stage else None,
        "grade": record.grade.value if record.grade else None,
        "extent": record.extent.value if record.extent else None,
        "subtype": record.subtype.value if record.subtype else None,
    }


def record_from_obj(obj: dict | None) -> DiagnosisRecord | None:
    if obj is None:
        return None

    def opt(cls, key):
        raw = obj.get(key)
        return parse_enum(cls, raw) if raw is not None else None

    record = DiagnosisRecord(
        status=parse_enum(PeriodontalStatus, obj["status"]),
        stage=opt(Stage, "stage"),
        grade=opt(Grade, "grade"),
        extent=opt(Extent, "extent"),
        subtype=opt(Subtype, "subtype"),
    )
    problems = validate_record(record)
    if problems:
        raise ValueError("; ".join(problems))
    return record


def _meta_to_obj(meta: PatientMeta | None) -> dict | None:
    if meta is None:
        return None
    return {
        "age": meta.age,
        "natural_teeth_count": meta.natural_teeth_count,
        "has_full_mouth_radiographs": meta.has_full_mouth_radiographs,
        "has_periodontal_charting": meta.has_periodontal_charting,
    }


def _meta_from_obj(obj: dict | None) -> PatientMeta | None:
    if obj is None:
        return None
    return PatientMeta(
        age=int(obj["age"]),
        natural_teeth_count=int(obj["natural_teeth_count"]),
        has_full_mouth_radiographs=bool(obj["has_full_mouth_radiographs"]),
        has_periodontal_charting=bool(obj["has_periodontal_charting"]),
    )


def note_to_obj(annotated: AnnotatedNote) -> dict:
    obj = {
        "note_id": annotated.note.note_id,
        "site_id": annotated.note.site_id,
        "text": annotated.note.text,
        "provenance": annotated.note.provenance.value,
        "annotation_source": annotated.annotation_source.value,
        "spans": [span_to_obj(s) for s in annotated.spans],
        "record": record_to_obj(annotated.record),
    }
    if annotated.meta is not None:
        obj["meta"] = _meta_to_obj(annotated.meta)
    if annotated.guideline_version is not None:
        obj["guideline_version"] = annotated.guideline_version.value
    if annotated.qa is not None:
        obj["qa"] = annotated.qa
    return obj


def note_from_obj(obj: dict) -> AnnotatedNote:
    text = obj["text"]
    note = Note(
        note_id=obj["note_id"],
        site_id=obj["site_id"],
        text=text,
        provenance=parse_enum(Provenance, obj["provenance"]),
    )
    spans = tuple(_span_from_obj(s, text) for s in obj.get("spans", []))
    problems = span_violations(text, list(spans))
    if problems:
        raise ValueError("; ".join(problems))
    gv = obj.get("guideline_version")
    return AnnotatedNote(
        note=note,
        spans=spans,
        record=record_from_obj(obj.get("record")),
        annotation_source=parse_enum(AnnotationSource, obj["annotation_source"]),
        meta=_meta_from_obj(obj.get("meta")),
        guideline_version=parse_enum(GuidelineVersion, gv) if gv else None,
        qa=obj.get("qa"),
    )


def atomic_write_text(path, text: str) -> None:
    """Write a file via a temp sibling and rename, so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_corpus(notes, path) -> None:
    ids = [n.note.note_id for n in notes]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise CorpusFormatError(f"duplicate note_id {dup!r} in corpus")
    lines = [json.dumps(note_to_obj(n), ensure_ascii=False) for n in notes]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_corpus(path) -> list[AnnotatedNote]:
    """Parse a corpus file; malformed lines and duplicate ids raise with context."""
    notes: list[AnnotatedNote] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                annotated = note_from_obj(obj)
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: malformed record: {exc}") from exc
            note_id = annotated.note.note_id
            if note_id in seen:
                raise CorpusFormatError(f"{path}:{lineno}: duplicate note_id {note_id!r}")
            seen.add(note_id)
            notes.append(annotated)
    return notes


def read_patient_meta(path) -> dict[str, PatientMeta]:
    """Read a line-delimited meta file mapping note_id to PatientMeta fields."""
    out: dict[str, PatientMeta] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out[obj["note_id"]] = _meta_from_obj(obj)
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: malformed meta record: {exc}") from exc
    return out


# --------------------------------------------------------------------------
# splitting

@dataclass(frozen=True)
class SplitManifest:
    seed: int
    ratios: tuple[float, float, float]
    membership: dict[str, str]

    def partition_ids(self, partition: str) -> list[str]:
        return [nid for nid, part in self.membership.items() if part == partition]

    def sizes(self) -> tuple[int, int, int]:
        counts = {p: 0 for p in PARTITIONS}
        for part in self.membership.values():
            counts[part] += 1
        return counts["train"], counts["validation"], counts["test"]


def split_corpus(notes, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitManifest:
    """Deterministic seeded split into train/validation/test.

    Partition sizes are floor(ratio * N); leftover rows go to train so the
    evaluation partitions stay at exactly their nominal fraction.
    """
    if len(ratios) != len(PARTITIONS):
        raise ValueError(f"expected {len(PARTITIONS)} ratios, got {len(ratios)}")
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must all be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    ids = [getattr(n, "note", n).note_id for n in notes]
    if len(ids) < len(PARTITIONS):
        raise ValueError(
            f"cannot split {len(ids)} notes into {len(PARTITIONS)} partitions"
        )
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate note_id in corpus")

    n = len(ids)
    n_val = math.floor(ratios[1] * n)
    n_test = math.floor(ratios[2] * n)
    n_train = n - n_val - n_test

    shuffled = list(ids)
    random.Random(seed).shuffle(shuffled)
    membership: dict[str, str] = {}
    for idx, nid in enumerate(shuffled):
        if idx < n_train:
            membership[nid] = "train"
        elif idx < n_train + n_val:
            membership[nid] = "validation"
        else:
            membership[nid] = "test"
    return SplitManifest(seed=seed, ratios=tuple(ratios), membership=membership)


def write_manifest(manifest: SplitManifest, path) -> None:
    payload = {
        "seed": manifest.seed,
        "ratios": list(manifest.ratios),
        "membership": manifest.membership,
    }
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> SplitManifest:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
            membership = dict(obj["membership"])
            bad = {p for p in membership.values()} - set(PARTITIONS)
            if bad:
                raise ValueError(f"unknown partitions {sorted(bad)}")
            return SplitManifest(
                seed=int(obj["seed"]),
                ratios=tuple(float(r) for r in obj["ratios"]),
                membership=membership,
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise CorpusFormatError(f"{path}: malformed manifest: {exc}") from exc
