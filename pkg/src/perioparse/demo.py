"""Self-contained demo corpora for experiments and tests.

Real seed notes cannot ship with the package, so these helpers fabricate
plausible stand-ins: clean rendered notes whose records sweep the value
space of every dimension.
"""

from __future__ import annotations

import random

from .corpus import AnnotatedNote, AnnotationSource, Provenance
from .model import DiagnosisRecord, Extent, Grade, PeriodontalStatus, Stage, Subtype
from .synthesis import CLEAN, SeedTemplate, compose_note

_STAGES = tuple(Stage)
_GRADES = tuple(Grade)
_EXTENTS = tuple(Extent)
_SUBTYPES = tuple(Subtype)


def _demo_record(status: PeriodontalStatus, i: int) -> DiagnosisRecord:
    if status is PeriodontalStatus.PERIODONTITIS:
        return DiagnosisRecord(
            status,
            stage=_STAGES[i % len(_STAGES)],
            grade=_GRADES[i % len(_GRADES)],
            extent=_EXTENTS[i % len(_EXTENTS)],
        )
    if status is PeriodontalStatus.GINGIVITIS:
        return DiagnosisRecord(
            status,
            extent=_EXTENTS[(i + 1) % len(_EXTENTS)],
            subtype=_SUBTYPES[i % len(_SUBTYPES)],
        )
    return DiagnosisRecord(status, subtype=_SUBTYPES[i % len(_SUBTYPES)])


def demo_seed_notes(per_category: int = 15, site_id: str = "site1") -> list[AnnotatedNote]:
    """A gold-annotated corpus of clean notes, per_category per status."""
    notes = []
    for status, code in (
        (PeriodontalStatus.PERIODONTITIS, "p"),
        (PeriodontalStatus.GINGIVITIS, "g"),
        (PeriodontalStatus.HEALTH, "h"),
    ):
        for i in range(per_category):
            record = _demo_record(status, i)
            note_id = f"seed-{code}-{i:02d}"
            rng = random.Random(f"demo:{note_id}")
            rendered = compose_note(
                record,
                rng,
                CLEAN,
                note_id=note_id,
                site_id=site_id,
                provenance=Provenance.REAL,
            )
            notes.append(rendered.with_(annotation_source=AnnotationSource.GOLD))
    return notes


def demo_seed_templates(per_category: int = 15, site_id: str = "site1") -> list[SeedTemplate]:
    """Ready-made seed templates covering all stages, grades, extents, subtypes."""
    return [
        SeedTemplate(n.note, n.record.status, n.record)
        for n in demo_seed_notes(per_category, site_id)
    ]
