"""Synthetic-corpus machinery: seed templates, prompts, and the offline engine.

The offline generator is a deterministic stand-in for a hosted LLM: it
renders notes whose diagnosis sentences it fully controls, so every note
carries exact ground-truth spans and a record. Perturbation rates inject the
documented real-world failure classes (typos, informal diagnosis formats,
anchor variants, secondary diagnoses, distractor extent adjectives) for
robustness experiments.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from pathlib import Path

from .corpus import AnnotatedNote, AnnotationSource, Note, Provenance, record_from_obj
from .extraction import detect_status_rulebased, extract_statements
from .model import (
    DIMENSIONS,
    DiagnosisRecord,
    Dimension,
    EntitySpan,
    Extent,
    PeriodontalStatus,
    Subtype,
    is_valid_record,
)
from .normalization import adjudicate, infer_status_context, within_one_edit


class TemplateSelectionError(ValueError):
    """A status category cannot supply enough seed notes."""


@dataclass(frozen=True)
class SeedTemplate:
    """A seed note, its detected status bucket, and the diagnosis it embeds."""

    note: Note
    status_category: PeriodontalStatus
    embedded_record: DiagnosisRecord

    def __post_init__(self):
        if self.status_category is not self.embedded_record.status:
            raise ValueError("status_category must match embedded_record.status")


@dataclass(frozen=True)
class PerturbationSpec:
    """Rates for the error classes injected into offline notes."""

    typo_rate: float = 0.0
    informal_format_rate: float = 0.0
    anchor_variation_rate: float = 0.0
    multi_diagnosis_rate: float = 0.0
    distractor_extent_rate: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        for name in (
            "typo_rate",
            "informal_format_rate",
            "anchor_variation_rate",
            "multi_diagnosis_rate",
            "distractor_extent_rate",
        ):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {rate}")


CLEAN = PerturbationSpec()


def select_seed_templates(
    corpus: list[AnnotatedNote], per_category: int = 15, seed: int = 0
) -> list[SeedTemplate]:
    """Sample seed templates per status category, bucketed by the keyword detector.

    Sampling is uniform without replacement within each category and
    deterministic under the seed.
    """
    pools: dict[PeriodontalStatus, list[AnnotatedNote]] = {s: [] for s in PeriodontalStatus}
    for annotated in corpus:
        detected = detect_status_rulebased(annotated.note.text)
        if detected is not None:
            pools[detected].append(annotated)

    rng = random.Random(seed)
    templates: list[SeedTemplate] = []
    for status in (
        PeriodontalStatus.PERIODONTITIS,
        PeriodontalStatus.GINGIVITIS,
        PeriodontalStatus.HEALTH,
    ):
        pool = pools[status]
        if len(pool) < per_category:
            raise TemplateSelectionError(
                f"category {status.value}: need {per_category} notes, found {len(pool)} "
                f"(short by {per_category - len(pool)})"
            )
        for annotated in rng.sample(pool, per_category):
            templates.append(
                SeedTemplate(annotated.note, status, _template_record(annotated, status))
            )
    return templates


def _template_record(annotated: AnnotatedNote, status: PeriodontalStatus) -> DiagnosisRecord:
    """Best available embedded record agreeing with the detected category."""
    if annotated.record is not None and annotated.record.status is status:
        return annotated.record
    derived = adjudicate(
        infer_status_context(extract_statements(annotated.note.text, "informal"))
    )
    if derived is not None and derived.status is status:
        return derived
    return DiagnosisRecord(status)


def templates_from_corpus(corpus: list[AnnotatedNote]) -> list[SeedTemplate]:
    """Treat every note of a corpus as a template; each must carry a record."""
    templates = []
    for annotated in corpus:
        if annotated.record is None:
            raise TemplateSelectionError(
                f"note {annotated.note.note_id!r} has no record; cannot use as template"
            )
        templates.append(
            SeedTemplate(annotated.note, annotated.record.status, annotated.record)
        )
    return templates


# --------------------------------------------------------------------------
# prompts

@dataclass(frozen=True)
class PromptSections:
    rules: str
    components: str
    labeling: str


DEFAULT_PROMPT_SECTIONS = PromptSections(
    rules=(
        "Rewrite the template note into a new, fictional clinical note. Vary the "
        "narrative, phrasing, and incidental findings while keeping the style of "
        "a periodontal progress note. Do not copy template sentences verbatim and "
        "do not invent identifying details."
    ),
    components=(
        "The rewritten note must contain: a visit reason, clinical findings, a "
        "single diagnosis sentence anchored by \"D:\", and a plan or follow-up "
        "sentence."
    ),
    labeling=(
        "Keep the template's periodontal diagnosis exactly as written; do not "
        "alter any of its values."
    ),
)

TRAILER_PREFIX = "LABELS:"

_LEGAL_TRAILER_KEYS = {
    PeriodontalStatus.PERIODONTITIS: ("status", "stage", "grade", "extent"),
    PeriodontalStatus.GINGIVITIS: ("status", "extent", "subtype"),
    PeriodontalStatus.HEALTH: ("status", "subtype"),
}

_DIMENSION_TITLES = {
    PeriodontalStatus.PERIODONTITIS: "Status, Stage, Grade, Extent",
    PeriodontalStatus.GINGIVITIS: "Status, Extent, Subtype",
    PeriodontalStatus.HEALTH: "Status, Subtype",
}


def trailer_for_record(record: DiagnosisRecord) -> str:
    """The machine-readable label line a generated note must end with."""
    keys = _LEGAL_TRAILER_KEYS[record.status]
    values = {
        "status": record.status.value,
        "stage": record.stage.value if record.stage else None,
        "grade": record.grade.value if record.grade else None,
        "extent": record.extent.value if record.extent else None,
        "subtype": record.subtype.value if record.subtype else None,
    }
    payload = {k: values[k] for k in keys}
    return f"{TRAILER_PREFIX} {json.dumps(payload)}"


def build_prompt(template: SeedTemplate, sections: PromptSections = DEFAULT_PROMPT_SECTIONS) -> str:
    """Assemble the generation prompt: rules, components, labeling, template text."""
    status = template.embedded_record.status
    labeling = (
        f"{sections.labeling}\n"
        f"Annotated dimensions for this note: {_DIMENSION_TITLES[status]}.\n"
        f"End the note with one final line exactly of this form:\n"
        f"{trailer_for_record(template.embedded_record)}"
    )
    return (
        "You are generating a synthetic dental clinical note from a template.\n\n"
        "=== Rewriting rules ===\n"
        f"{sections.rules}\n\n"
        "=== Required note components ===\n"
        f"{sections.components}\n\n"
        "=== Labeling instructions ===\n"
        f"{labeling}\n\n"
        "=== Template note ===\n"
        f"{template.note.text}\n"
    )


def parse_label_trailer(text: str) -> tuple[str, DiagnosisRecord | None]:
    """Split a generated note into (body, embedded record from its trailer).

    A missing or unparseable trailer yields record None; the caller flags the
    note for QA instead of dropping it.
    """
    lines = text.rstrip().splitlines()
    for idx in range(len(lines) - 1, -1, -1):
        if lines[idx].strip().startswith(TRAILER_PREFIX):
            body = "\n".join(lines[:idx]).rstrip()
            payload = lines[idx].strip()[len(TRAILER_PREFIX) :].strip()
            try:
                record = record_from_obj(json.loads(payload))
            except (ValueError, KeyError, TypeError):
                record = None
            return body, record
    return text, None


def read_prompt_sections(path) -> PromptSections:
    """Read a plain-text prompt file with [rules] / [components] / [labeling] headers."""
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        header = re.fullmatch(r"\[(\w+)\]", line.strip())
        if header:
            current = header.group(1).lower()
            sections[current] = []
            continue
        if current is not None:
            sections[current].append(line)
    missing = {"rules", "components", "labeling"} - sections.keys()
    if missing:
        raise ValueError(f"{path}: prompt file missing sections: {sorted(missing)}")
    return PromptSections(
        rules="\n".join(sections["rules"]).strip(),
        components="\n".join(sections["components"]).strip(),
        labeling="\n".join(sections["labeling"]).strip(),
    )


# --------------------------------------------------------------------------
# offline engine

_INTRO_POOL = (
    "Patient presents for comprehensive periodontal evaluation.",
    "Medical and dental histories were reviewed and updated.",
    "Oral hygiene instructions were reviewed with the patient.",
    "Full mouth probing depths were recorded at six sites per tooth.",
    "Patient reports brushing twice daily and flossing occasionally.",
    "Radiographic review completed prior to the exam.",
    "Bleeding on probing noted in scattered posterior areas.",
    "Supragingival calculus present on the lower anterior teeth.",
)

_OUTRO_POOL = (
    "Scaling and root planing completed for the upper right quadrant.",
    "Patient tolerated the procedure well.",
    "Recall interval set to three months.",
    "Treatment options were discussed and the patient elected conservative therapy.",
    "Next visit scheduled for reevaluation of tissue response.",
    "Oral cancer screening performed with no suspicious findings.",
)

_ANCHOR_VARIANTS = ("D-", "Diagnosis:", "Dx:", None)

_SUBTYPE_PHRASES = {
    Subtype.INTACT_PERIODONTIUM: ("intact periodontium",),
    Subtype.REDUCED_PERIODONTIUM_STABLE_PERIODONTITIS: (
        "reduced periodontium with stable periodontitis",
        "reduced periodontium, stable periodontitis",
    ),
    Subtype.REDUCED_PERIODONTIUM_NON_PERIODONTITIS: (
        "reduced periodontium, non-periodontitis",
        "reduced periodontium with non-periodontitis",
    ),
}

_SUBTYPE_CONNECTORS = (" on {article} ", " with {article} ")

# Vocabulary a typo must not collide with (it must still resolve to its source word).
_SAFETY_VOCAB = (
    "periodontitis",
    "gingivitis",
    "health",
    "healthy",
    "localized",
    "generalized",
    "stage",
    "grade",
    "intact",
    "reduced",
    "periodontium",
    "stable",
    "past",
    "diagnosis",
)

_TYPO_WORD_RE = re.compile(r"[A-Za-z]{5,}")


@dataclass
class _Atom:
    text: str
    dimension: Dimension | None = None
    value: object = None
    typo_ok: bool = False


def _word(text: str, dim: Dimension | None = None, value=None, typo_ok=False) -> _Atom:
    return _Atom(text, dim, value, typo_ok)


def _diagnosis_atoms(
    record: DiagnosisRecord,
    anchor: str | None,
    informal_style: str | None,
    distractor: bool,
    rng: random.Random,
) -> list[_Atom]:
    """Render one diagnosis sentence as atoms carrying span metadata."""
    atoms: list[_Atom] = []
    if anchor is not None:
        atoms.append(_word(anchor))
        atoms.append(_word(" "))

    if informal_style == "extent_roman":
        atoms.append(_word(record.extent.value, Dimension.EXTENT, record.extent, typo_ok=True))
        atoms.append(_word(" "))
        atoms.append(_word(record.stage.value, Dimension.STAGE, record.stage))
        atoms.append(_word(" "))
        atoms.append(_word(record.grade.value, Dimension.GRADE, record.grade))
    elif informal_style == "stage_arabic":
        arabic = str(record.stage.rank + 1)
        atoms.append(_word("Stage", typo_ok=True))
        atoms.append(_word(" "))
        atoms.append(_word(arabic, Dimension.STAGE, record.stage))
        atoms.append(_word(" "))
        atoms.append(_word(record.grade.value, Dimension.GRADE, record.grade))
    else:
        if record.extent is not None:
            atoms.append(_word(record.extent.value, Dimension.EXTENT, record.extent, typo_ok=True))
            atoms.append(_word(" "))
        if record.status is PeriodontalStatus.HEALTH:
            atoms.append(_word("Gingival"))
            atoms.append(_word(" "))
            atoms.append(_word("health", Dimension.STATUS, record.status, typo_ok=True))
        else:
            atoms.append(
                _word(record.status.value, Dimension.STATUS, record.status, typo_ok=True)
            )
        if record.stage is not None:
            atoms.append(_word(" "))
            atoms.append(_word("Stage", typo_ok=True))
            atoms.append(_word(" "))
            atoms.append(_word(record.stage.value, Dimension.STAGE, record.stage))
        if record.grade is not None:
            atoms.append(_word(" "))
            atoms.append(_word("Grade", typo_ok=True))
            atoms.append(_word(" "))
            atoms.append(_word(record.grade.value, Dimension.GRADE, record.grade))
        if record.subtype is not None:
            phrase = rng.choice(_SUBTYPE_PHRASES[record.subtype])
            article = "an" if phrase[0] in "aeiou" else "a"
            atoms.append(_word(rng.choice(_SUBTYPE_CONNECTORS).format(article=article)))
            atoms.append(_word(phrase, Dimension.SUBTYPE, record.subtype, typo_ok=True))
    if distractor:
        atoms.append(_word(" with "))
        atoms.append(_word(rng.choice(("Generalized", "Localized"))))
        atoms.append(_word(" "))
        atoms.append(_word("Recession"))
    atoms.append(_word("."))
    return atoms


def _safe_typo(word: str, rng: random.Random) -> str:
    """One random edit that still resolves uniquely back to the source word."""
    letters = "abcdefghijklmnopqrstuvwxyz"
    low = word.lower()
    for _ in range(12):
        op = rng.choice(("sub", "ins", "del"))
        pos = rng.randrange(1, len(word))
        if op == "sub":
            mutated = word[:pos] + rng.choice(letters) + word[pos + 1 :]
        elif op == "ins":
            mutated = word[:pos] + rng.choice(letters) + word[pos:]
        else:
            mutated = word[:pos] + word[pos + 1 :]
        if mutated.lower() == low:
            continue
        if any(w != low and within_one_edit(mutated.lower(), w) for w in _SAFETY_VOCAB):
            continue
        return mutated
    return word[:2] + word[1:]  # duplicate second character


def _inject_typo(atoms: list[_Atom], rng: random.Random) -> None:
    """Corrupt one eligible entity word in place."""
    candidates = []
    for idx, atom in enumerate(atoms):
        if not atom.typo_ok:
            continue
        for m in _TYPO_WORD_RE.finditer(atom.text):
            candidates.append((idx, m.start(), m.end()))
    if not candidates:
        return
    idx, start, end = rng.choice(candidates)
    atom = atoms[idx]
    mutated = _safe_typo(atom.text[start:end], rng)
    atom.text = atom.text[:start] + mutated + atom.text[end:]


def _secondary_record(primary: DiagnosisRecord, rng: random.Random) -> DiagnosisRecord:
    """A strictly weaker (or duplicate, for health) co-occurring diagnosis."""
    if primary.status is PeriodontalStatus.PERIODONTITIS:
        return DiagnosisRecord(
            PeriodontalStatus.GINGIVITIS,
            extent=rng.choice((Extent.LOCALIZED, Extent.GENERALIZED)),
        )
    if primary.status is PeriodontalStatus.GINGIVITIS:
        return DiagnosisRecord(
            PeriodontalStatus.HEALTH, subtype=Subtype.INTACT_PERIODONTIUM
        )
    return primary


def compose_note(
    record: DiagnosisRecord,
    rng: random.Random,
    perturb: PerturbationSpec = CLEAN,
    note_id: str = "synthetic",
    site_id: str = "site1",
    provenance: Provenance = Provenance.OFFLINE_GENERATED,
) -> AnnotatedNote:
    """Render one synthetic note with ground-truth spans for the given record."""
    assert is_valid_record(record), "compose_note requires a valid record"
    intro = rng.sample(_INTRO_POOL, rng.randint(1, 2))
    outro = rng.sample(_OUTRO_POOL, rng.randint(0, 2))

    anchor: str | None = "D:"
    if rng.random() < perturb.anchor_variation_rate:
        anchor = rng.choice(_ANCHOR_VARIANTS)

    informal_style = None
    if (
        record.status is PeriodontalStatus.PERIODONTITIS
        and record.stage is not None
        and record.grade is not None
        and rng.random() < perturb.informal_format_rate
    ):
        informal_style = rng.choice(("extent_roman", "stage_arabic"))
        if informal_style == "extent_roman" and record.extent is None:
            informal_style = "stage_arabic"

    distractor = (
        record.status is not PeriodontalStatus.HEALTH
        and rng.random() < perturb.distractor_extent_rate
    )

    atoms = _diagnosis_atoms(record, anchor, informal_style, distractor, rng)
    if rng.random() < perturb.typo_rate:
        _inject_typo(atoms, rng)

    candidates = [record]
    secondary_atoms: list[_Atom] | None = None
    if rng.random() < perturb.multi_diagnosis_rate:
        secondary = _secondary_record(record, rng)
        candidates.append(secondary)
        secondary_atoms = _diagnosis_atoms(secondary, "Dx:", None, False, rng)

    pieces: list[str] = []
    spans: list[EntitySpan] = []
    pos = 0

    def add(text: str, dim: Dimension | None = None, value=None):
        nonlocal pos
        if dim is not None:
            spans.append(EntitySpan(dim, value, pos, pos + len(text), text))
        pieces.append(text)
        pos += len(text)

    for sentence in intro:
        add(sentence)
        add(" ")
    for atom in atoms:
        add(atom.text, atom.dimension, atom.value)
    if secondary_atoms is not None:
        add(" ")
        for atom in secondary_atoms:
            add(atom.text, atom.dimension, atom.value)
    for sentence in outro:
        add(" ")
        add(sentence)

    gold = adjudicate(candidates)
    note = Note(note_id=note_id, site_id=site_id, text="".join(pieces), provenance=provenance)
    return AnnotatedNote(
        note=note,
        spans=tuple(spans),
        record=gold,
        annotation_source=AnnotationSource.EMBEDDED,
    )


def generate_offline(
    templates: list[SeedTemplate],
    variants_per_template: int = 10,
    perturb: PerturbationSpec = CLEAN,
) -> list[AnnotatedNote]:
    """Deterministically render synthetic notes from templates.

    A pure function of (templates, perturbation spec): identical seeds yield
    byte-identical corpora. Per-template seeds derive from the template id,
    so templates can be rendered independently.
    """
    notes = []
    for template in templates:
        for variant in range(variants_per_template):
            rng = random.Random(f"{perturb.rng_seed}:{template.note.note_id}:{variant}")
            notes.append(
                compose_note(
                    template.embedded_record,
                    rng,
                    perturb,
                    note_id=f"{template.note.note_id}-off{variant:02d}",
                    site_id=template.note.site_id,
                )
            )
    return notes


# --------------------------------------------------------------------------
# label QA

@dataclass(frozen=True)
class Discrepancy:
    dimension: Dimension
    embedded: object
    extracted: object  # also the proposed correction; None proposes "blank"


@dataclass(frozen=True)
class QAVerdict:
    consistent: bool
    discrepancies: tuple[Discrepancy, ...] = ()


def validate_labels(annotated: AnnotatedNote, mode: str = "informal") -> QAVerdict:
    """Cross-check a note's embedded record against the grammar extractor.

    Dimensions the text does not support are proposed as blank; dimensions
    the text contradicts are proposed with the extractor's reading.
    """
    if annotated.annotation_source is not AnnotationSource.EMBEDDED:
        raise ValueError("validate_labels applies to embedded-annotation notes")
    extracted = adjudicate(
        infer_status_context(extract_statements(annotated.note.text, mode))
    )
    discrepancies = []
    for dim in DIMENSIONS:
        embedded_value = annotated.record.value_for(dim) if annotated.record else None
        extracted_value = extracted.value_for(dim) if extracted else None
        if embedded_value != extracted_value:
            discrepancies.append(Discrepancy(dim, embedded_value, extracted_value))
    return QAVerdict(not discrepancies, tuple(discrepancies))


def verdict_to_obj(verdict: QAVerdict) -> dict:
    return {
        "consistent": verdict.consistent,
        "discrepancies": [
            {
                "dimension": d.dimension.value,
                "embedded": d.embedded.value if d.embedded is not None else None,
                "proposal": d.extracted.value if d.extracted is not None else "blank",
            }
            for d in verdict.discrepancies
        ],
    }


def apply_qa_fix(annotated: AnnotatedNote, mode: str = "informal") -> AnnotatedNote:
    """Replace the embedded record with the cross-checker's reading of the text."""
    fixed = adjudicate(
        infer_status_context(extract_statements(annotated.note.text, mode))
    )
    return annotated.with_(record=fixed)
