"""Rule-grammar extraction of diagnosis entities from note text.

The tokenizer is non-destructive: tokens plus the whitespace between them
reconstruct the input byte for byte, so character offsets stay valid no
matter what consumes them downstream.

The grammar recognizes diagnosis statements (anchored by "D:", "Dx:",
"Diagnosis:", "D-", or opening a sentence) and, inside them, status words,
stage and grade markers, extent adjectives, and periodontium subtype
phrases. Entity words tolerate a single-character typo. Extent adjectives
attach to the nearest status-like head on their right; adjectives whose
head is an unrelated noun (e.g. "Generalized Recession") yield no span.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Protocol

from .model import (
    Dimension,
    EntitySpan,
    Extent,
    Grade,
    PeriodontalStatus,
    Stage,
    Statement,
    Subtype,
    parse_enum,
)
from .normalization import (
    ARABIC_STAGES,
    GRADE_LETTERS,
    ROMAN_STAGES,
    max_severity,
    within_one_edit,
)

DEFAULT_ANCHORS = ("d", "dx", "diagnosis")

MODES = ("strict", "informal")

_HEDGE_CUES = (
    "to be confirmed",
    "to confirm",
    "possible",
    "possibly",
    "probable",
    "likely",
    "suspected",
    "rule out",
    "r/o",
    "pending",
)

# Adjectives an extent word may look past when searching for its head.
_HEAD_SKIP_WORDS = {"chronic", "mild", "moderate", "severe", "advanced", "early", "slight"}

# Connectors allowed between "reduced periodontium" and its qualifier.
_QUALIFIER_SKIP = {",", ";", "-", "/", "with", "due", "to", "on", "a", "an", "of", "from"}

# Words that mark a preceding-context "periodontitis" as part of a subtype
# phrase or a negation, not a status mention.
_STATUS_GUARDS = ("stable", "past", "non")

_PERIO_CONTEXT = re.compile(r"periodont|gingiv", re.IGNORECASE)

_TOKEN_RE = re.compile(r"[^\W_]+|\S", re.UNICODE)
_SENTENCE_RE = re.compile(r"[^.!?\n]+")


@dataclass(frozen=True)
class Token:
    """A tokenizer unit anchored at character offsets [start, end)."""

    text: str
    start: int
    end: int


def tokenize(text: str) -> list[Token]:
    """Split text into maximal alphanumeric runs and single punctuation marks.

    Whitespace is never part of a token; it survives as the gaps between
    offsets, which is what makes the tokenization reversible.
    """
    return [Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def reconstruct(text: str, tokens: list[Token]) -> str:
    """Rebuild the input from tokens plus the original inter-token gaps."""
    pieces = []
    cursor = 0
    for tok in tokens:
        pieces.append(text[cursor : tok.start])
        pieces.append(tok.text)
        cursor = tok.end
    pieces.append(text[cursor:])
    return "".join(pieces)


def _match_word(token_lower: str, word: str) -> bool:
    """Vocabulary match tolerating one edit for words of four or more letters."""
    if token_lower == word:
        return True
    if len(word) < 4 or len(token_lower) < 4:
        return False
    return within_one_edit(token_lower, word)


def detect_status_rulebased(text: str) -> PeriodontalStatus | None:
    """Keyword-based status detection used for seed-note bucketing.

    Returns the most severe status whose keyword family appears. Health
    words only count on lines with periodontal context, and "periodontitis"
    preceded by stable/past/non is a subtype or negation, not a status.
    """
    found: PeriodontalStatus | None = None

    def note(status: PeriodontalStatus):
        nonlocal found
        found = status if found is None else max_severity(found, status)

    for line in text.splitlines():
        low = line.lower()
        for m in re.finditer(r"periodontitis", low):
            before = low[: m.start()].rstrip(" -")
            prev = re.search(r"([a-z]+)$", before)
            if prev and prev.group(1) in _STATUS_GUARDS:
                continue
            note(PeriodontalStatus.PERIODONTITIS)
            break
        if "gingivitis" in low:
            note(PeriodontalStatus.GINGIVITIS)
        if re.search(r"\bhealthy?\b", low) and _PERIO_CONTEXT.search(low):
            note(PeriodontalStatus.HEALTH)
    return found


@dataclass
class _Element:
    kind: str  # status | stage | grade | subtype
    value: object
    span_start: int
    span_end: int
    first_token: int
    last_token: int
    value_token: int  # token index carrying the value (stage numeral, etc.)


@dataclass
class _Group:
    status: _Element | None = None
    stage: _Element | None = None
    grade: _Element | None = None
    subtype: _Element | None = None
    extent_spans: list[EntitySpan] = field(default_factory=list)

    def has(self, kind: str) -> bool:
        return getattr(self, kind) is not None


def _is_word(tok: Token) -> bool:
    return tok.text[0].isalnum()


def _next_content(tokens: list[Token], i: int) -> int | None:
    for j in range(i + 1, len(tokens)):
        if _is_word(tokens[j]):
            return j
    return None


def _prev_content(tokens: list[Token], i: int) -> int | None:
    for j in range(i - 1, -1, -1):
        if _is_word(tokens[j]):
            return j
    return None


def _match_subtype(tokens: list[Token], i: int):
    """Try a periodontium subtype phrase starting at token i.

    Returns (value_or_None, last_token_index) when the opener matched, else None.
    A bare "reduced periodontium" without a qualifier consumes its tokens but
    carries no determinable value.
    """
    low = tokens[i].text.lower()
    if _match_word(low, "intact"):
        j = _next_content(tokens, i)
        if j is not None and _match_word(tokens[j].text.lower(), "periodontium"):
            return Subtype.INTACT_PERIODONTIUM, j
        return None
    if not _match_word(low, "reduced"):
        return None
    j = _next_content(tokens, i)
    if j is None or not _match_word(tokens[j].text.lower(), "periodontium"):
        return None
    # qualifier scan
    k = j + 1
    while k < len(tokens) and tokens[k].text.lower() in _QUALIFIER_SKIP:
        k += 1
    if k < len(tokens):
        klow = tokens[k].text.lower()
        if _match_word(klow, "stable") or _match_word(klow, "past"):
            m = _next_content(tokens, k)
            if m is not None and tokens[m].text.lower() in ("stable", "past"):
                m = _next_content(tokens, m)
            if m is not None and _match_word(tokens[m].text.lower(), "periodontitis"):
                return Subtype.REDUCED_PERIODONTIUM_STABLE_PERIODONTITIS, m
        elif klow == "non":
            m = _next_content(tokens, k)
            if m is not None and _match_word(tokens[m].text.lower(), "periodontitis"):
                return Subtype.REDUCED_PERIODONTIUM_NON_PERIODONTITIS, m
    return None, j  # bare "reduced periodontium": consume, no value


def _scan_elements(text: str, tokens: list[Token], informal: bool, sentence_text: str):
    """Pass A: classify region tokens into elements and extent candidates."""
    elements: list[_Element] = []
    extents: list[tuple[Extent, int, Token]] = []  # (value, token index, token)
    consumed: set[int] = set()
    i = 0
    while i < len(tokens):
        if i in consumed or not _is_word(tokens[i]):
            i += 1
            continue
        tok = tokens[i]
        low = tok.text.lower()

        sub = _match_subtype(tokens, i)
        if sub is not None:
            value, last = sub
            consumed.update(range(i, last + 1))
            if value is not None:
                elements.append(
                    _Element("subtype", value, tok.start, tokens[last].end, i, last, i)
                )
            i = last + 1
            continue

        status_value = None
        if _match_word(low, "periodontitis"):
            prev = _prev_content(tokens, i)
            guarded = prev is not None and any(
                _match_word(tokens[prev].text.lower(), g) for g in _STATUS_GUARDS
            )
            if not guarded:
                status_value = PeriodontalStatus.PERIODONTITIS
        elif _match_word(low, "gingivitis"):
            status_value = PeriodontalStatus.GINGIVITIS
        elif (_match_word(low, "health") or _match_word(low, "healthy")) and _PERIO_CONTEXT.search(
            sentence_text
        ):
            status_value = PeriodontalStatus.HEALTH
        if status_value is not None:
            elements.append(_Element("status", status_value, tok.start, tok.end, i, i, i))
            consumed.add(i)
            i += 1
            continue

        if _match_word(low, "stage"):
            j = _next_content(tokens, i)
            if j is not None:
                jlow = tokens[j].text.lower()
                stage = ROMAN_STAGES.get(jlow) or ARABIC_STAGES.get(jlow)
                if stage is not None:
                    elements.append(
                        _Element("stage", stage, tokens[j].start, tokens[j].end, i, j, j)
                    )
                    consumed.update((i, j))
                    i = j + 1
                    continue

        if _match_word(low, "grade"):
            j = _next_content(tokens, i)
            if j is not None and len(tokens[j].text) == 1:
                grade = GRADE_LETTERS.get(tokens[j].text.lower())
                if grade is not None:
                    elements.append(
                        _Element("grade", grade, tokens[j].start, tokens[j].end, i, j, j)
                    )
                    consumed.update((i, j))
                    i = j + 1
                    continue

        if informal:
            # Bare roman numeral directly followed by a bare grade letter.
            if low in ROMAN_STAGES and tok.text.isupper():
                j = _next_content(tokens, i)
                if (
                    j is not None
                    and len(tokens[j].text) == 1
                    and tokens[j].text in ("A", "B", "C")
                ):
                    elements.append(
                        _Element("stage", ROMAN_STAGES[low], tok.start, tok.end, i, i, i)
                    )
                    consumed.add(i)
                    i += 1
                    continue
            # Bare grade letter trailing a stage value token.
            if tok.text in ("A", "B", "C"):
                prev = _prev_content(tokens, i)
                if prev is not None and any(
                    el.kind == "stage" and el.value_token == prev for el in elements
                ):
                    elements.append(
                        _Element("grade", GRADE_LETTERS[low], tok.start, tok.end, i, i, i)
                    )
                    consumed.add(i)
                    i += 1
                    continue

        if _match_word(low, "localized"):
            extents.append((Extent.LOCALIZED, i, tok))
        elif _match_word(low, "generalized"):
            extents.append((Extent.GENERALIZED, i, tok))
        i += 1
    return elements, extents


def _build_statements(
    text: str, tokens: list[Token], informal: bool, hedged: bool, sentence_text: str
) -> list[Statement]:
    """Pass B and C: group elements into statements and attach extents."""
    elements, extents = _scan_elements(text, tokens, informal, sentence_text)
    if not elements and not extents:
        return []

    groups: list[_Group] = []
    element_group: dict[int, _Group] = {}
    current: _Group | None = None
    for el in sorted(elements, key=lambda e: e.first_token):
        if current is None or current.has(el.kind):
            current = _Group()
            groups.append(current)
        setattr(current, el.kind, el)
        for idx in range(el.first_token, el.last_token + 1):
            element_group[idx] = current

    token_kind = {}
    for el in elements:
        for idx in range(el.first_token, el.last_token + 1):
            token_kind[idx] = el.kind

    for value, idx, tok in extents:
        head = None
        for j in range(idx + 1, len(tokens)):
            if not _is_word(tokens[j]):
                continue
            if tokens[j].text.lower() in _HEAD_SKIP_WORDS:
                continue
            head = j
            break
        if head is None:
            continue
        kind = token_kind.get(head)
        if kind not in ("status", "stage", "grade"):
            continue
        group = element_group[head]
        group.extent_spans.append(
            EntitySpan(Dimension.EXTENT, value, tok.start, tok.end, tok.text)
        )

    statements = []
    for group in groups:
        spans = []
        for el in (group.status, group.stage, group.grade, group.subtype):
            if el is None:
                continue
            dim = Dimension[el.kind.upper()]
            spans.append(
                EntitySpan(dim, el.value, el.span_start, el.span_end, text[el.span_start : el.span_end])
            )
        spans.extend(group.extent_spans)
        if not spans:
            continue
        spans.sort(key=lambda s: s.start)
        statements.append(
            Statement(tuple(spans), hedged=hedged, start=spans[0].start, end=spans[-1].end)
        )
    return statements


def _find_anchor_regions(tokens: list[Token], anchors: tuple[str, ...]) -> list[int]:
    """Indices just past each anchor ("D" ":") within a sentence's tokens."""
    starts = []
    for i in range(len(tokens) - 1):
        low = tokens[i].text.lower()
        if len(low) <= 3:
            hit = low in anchors
        else:
            hit = any(len(a) >= 4 and _match_word(low, a) for a in anchors)
        if hit and tokens[i + 1].text in (":", "-"):
            starts.append(i + 2)
    return starts


def _initial_trigger(tokens: list[Token], sentence_text: str) -> bool:
    """Does the sentence open with a diagnosis phrase?"""
    content = [t for t in tokens if _is_word(t)][:2]
    for tok in content:
        low = tok.text.lower()
        if _match_word(low, "localized") or _match_word(low, "generalized"):
            return True
        if _match_word(low, "periodontitis") or _match_word(low, "gingivitis"):
            return True
        if (_match_word(low, "health") or _match_word(low, "healthy")) and _PERIO_CONTEXT.search(
            sentence_text
        ):
            return True
        if _match_word(low, "stage"):
            return True
        if _match_word(low, "intact") or _match_word(low, "reduced"):
            return True
    return False


def extract_statements(
    text: str, mode: str = "strict", anchors: tuple[str, ...] = DEFAULT_ANCHORS
) -> list[Statement]:
    """Extract diagnosis statements with their spans and hedge flags."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    informal = mode == "informal"
    all_tokens = tokenize(text)
    statements: list[Statement] = []
    for sent in _SENTENCE_RE.finditer(text):
        s_start, s_end = sent.start(), sent.end()
        sentence_text = sent.group()
        tokens = [t for t in all_tokens if s_start <= t.start and t.end <= s_end]
        if not tokens:
            continue
        hedged = any(cue in sentence_text.lower() for cue in _HEDGE_CUES)
        anchor_starts = _find_anchor_regions(tokens, anchors)
        regions: list[list[Token]] = []
        if anchor_starts:
            bounds = anchor_starts + [len(tokens) + 2]
            for a, b in zip(bounds, bounds[1:]):
                regions.append(tokens[a : max(a, b - 2)])
        elif _initial_trigger(tokens, sentence_text):
            regions.append(tokens)
        for region in regions:
            statements.extend(
                _build_statements(text, region, informal, hedged, sentence_text)
            )
    return statements


def extract_entities(
    text: str, mode: str = "strict", anchors: tuple[str, ...] = DEFAULT_ANCHORS
) -> list[EntitySpan]:
    """All entity spans in the note, in text order."""
    spans = [
        span
        for statement in extract_statements(text, mode, anchors)
        for span in statement.spans
    ]
    spans.sort(key=lambda s: s.start)
    return spans


class Extractor(Protocol):
    """Anything that can turn note text into entity spans."""

    def extract(self, text: str) -> list[EntitySpan]: ...


@dataclass(frozen=True)
class RuleExtractor:
    """The built-in grammar extractor behind the common extractor interface."""

    mode: str = "strict"
    anchors: tuple[str, ...] = DEFAULT_ANCHORS

    def extract(self, text: str) -> list[EntitySpan]:
        return extract_entities(text, self.mode, self.anchors)

    def extract_statements(self, text: str) -> list[Statement]:
        return extract_statements(text, self.mode, self.anchors)


class PredictionFileError(ValueError):
    """A prediction file failed validation against its corpus."""


_VALUE_CLASSES = {
    Dimension.STATUS: PeriodontalStatus,
    Dimension.STAGE: Stage,
    Dimension.GRADE: Grade,
    Dimension.EXTENT: Extent,
}


def parse_span_obj(obj: dict, text: str) -> EntitySpan:
    """Decode one serialized span against its note text."""
    from .model import Subtype

    dimension = parse_enum(Dimension, obj["dimension"])
    value_cls = _VALUE_CLASSES.get(dimension, Subtype)
    value = parse_enum(value_cls, obj["value"])
    start, end = int(obj["start"]), int(obj["end"])
    if start < 0 or end <= start or end > len(text):
        raise PredictionFileError(f"span [{start},{end}) out of bounds for note of length {len(text)}")
    raw = text[start:end]
    declared = obj.get("raw_text")
    if declared is not None and declared != raw:
        raise PredictionFileError(
            f"span [{start},{end}) raw_text {declared!r} does not match note text {raw!r}"
        )
    return EntitySpan(dimension, value, start, end, raw)


def load_external_predictions(path, corpus) -> dict[str, list[EntitySpan]]:
    """Load model predictions (note_id + spans per line) validated against a corpus."""
    by_id = {n.note.note_id: n.note for n in corpus}
    predictions: dict[str, list[EntitySpan]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PredictionFileError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            note_id = obj.get("note_id")
            if note_id not in by_id:
                raise PredictionFileError(f"{path}:{lineno}: unknown note_id {note_id!r}")
            text = by_id[note_id].text
            spans = []
            for raw_span in obj.get("spans", []):
                try:
                    spans.append(parse_span_obj(raw_span, text))
                except (PredictionFileError, ValueError, KeyError) as exc:
                    raise PredictionFileError(
                        f"{path}:{lineno}: note {note_id!r}: {exc}"
                    ) from exc
            predictions[note_id] = spans
    return predictions
