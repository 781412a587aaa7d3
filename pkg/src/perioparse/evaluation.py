"""Gold-versus-predicted scoring: confusion matrices, P/R/F1, learning curves.

Scoring is value-level per dimension: each evaluated note contributes one
(gold, predicted) pair per dimension, with absence on either side recorded
as the explicit N/A class. N/A participates in the confusion matrix but is
never an averaged class.
"""

from __future__ import annotations

import random
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .model import DIMENSION_VALUES, DIMENSIONS, DiagnosisRecord, Dimension

NA = "N/A"


def record_labels(record: DiagnosisRecord | None) -> dict[Dimension, str]:
    """The five class labels a record contributes, with N/A for absences."""
    labels = {}
    for dim in DIMENSIONS:
        value = record.value_for(dim) if record is not None else None
        labels[dim] = value.value if value is not None else NA
    return labels


def compare_note(
    gold: DiagnosisRecord | None, pred: DiagnosisRecord | None
) -> dict[Dimension, tuple[str, str]]:
    """Per-dimension (gold, predicted) label pairs for one note."""
    gold_labels = record_labels(gold)
    pred_labels = record_labels(pred)
    return {dim: (gold_labels[dim], pred_labels[dim]) for dim in DIMENSIONS}


def dimension_classes(dimension: Dimension) -> tuple[str, ...]:
    return tuple(v.value for v in DIMENSION_VALUES[dimension]) + (NA,)


@dataclass
class ConfusionMatrix:
    """Counts of (gold class, predicted class) pairs for one dimension."""

    dimension: Dimension
    classes: tuple[str, ...]
    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def cell(self, gold: str, pred: str) -> int:
        return self.counts.get((gold, pred), 0)

    def add(self, gold: str, pred: str, n: int = 1) -> None:
        if gold not in self.classes or pred not in self.classes:
            raise ValueError(f"unknown class in pair ({gold!r}, {pred!r})")
        if n < 0:
            raise ValueError("counts must be non-negative")
        self.counts[(gold, pred)] = self.counts.get((gold, pred), 0) + n

    def gold_support(self, gold: str) -> int:
        return sum(self.cell(gold, p) for p in self.classes)

    def total(self) -> int:
        return sum(self.counts.values())

    def grid(self) -> list[list[int]]:
        return [[self.cell(g, p) for p in self.classes] for g in self.classes]


def build_confusion(pairs: Iterable[tuple[str, str]], dimension: Dimension) -> ConfusionMatrix:
    """Tally (gold, predicted) pairs into a matrix with an explicit N/A class."""
    matrix = ConfusionMatrix(dimension, dimension_classes(dimension))
    for gold, pred in pairs:
        matrix.add(gold, pred)
    return matrix


@dataclass(frozen=True)
class ClassMetrics:
    value: str
    tp: int
    fp: int
    fn: int
    support: int
    precision: float
    recall: float
    f1: float


def class_metrics(matrix: ConfusionMatrix, value: str) -> ClassMetrics:
    """P/R/F1 for one non-N/A class; zero denominators score 0."""
    if value == NA or value not in matrix.classes:
        raise ValueError(f"{value!r} is not a scoreable class of this matrix")
    tp = matrix.cell(value, value)
    fp = sum(matrix.cell(g, value) for g in matrix.classes if g != value)
    fn = sum(matrix.cell(value, p) for p in matrix.classes if p != value)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassMetrics(value, tp, fp, fn, tp + fn, precision, recall, f1)


def all_class_metrics(matrix: ConfusionMatrix) -> list[ClassMetrics]:
    return [class_metrics(matrix, c) for c in matrix.classes if c != NA]


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


def averages(metrics: Sequence[ClassMetrics]) -> tuple[PRF | None, PRF | None]:
    """(macro, weighted) over classes with support; absent when none have any."""
    supported = [m for m in metrics if m.support > 0]
    if not supported:
        return None, None
    n = len(supported)
    macro = PRF(
        sum(m.precision for m in supported) / n,
        sum(m.recall for m in supported) / n,
        sum(m.f1 for m in supported) / n,
    )
    total = sum(m.support for m in supported)
    weighted = PRF(
        sum(m.precision * m.support for m in supported) / total,
        sum(m.recall * m.support for m in supported) / total,
        sum(m.f1 * m.support for m in supported) / total,
    )
    return macro, weighted


@dataclass(frozen=True)
class DimensionMetrics:
    dimension: Dimension
    classes: tuple[ClassMetrics, ...]
    macro: PRF | None
    weighted: PRF | None


@dataclass(frozen=True)
class MetricsTable:
    site: str
    dimensions: tuple[DimensionMetrics, ...]

    def for_dimension(self, dimension: Dimension) -> DimensionMetrics:
        for dm in self.dimensions:
            if dm.dimension is dimension:
                return dm
        raise KeyError(dimension)


def evaluate_records(
    gold: dict[str, DiagnosisRecord | None],
    pred: dict[str, DiagnosisRecord | None],
    site: str = "site1",
) -> tuple[dict[Dimension, ConfusionMatrix], MetricsTable]:
    """Score aligned gold/predicted records, keyed by note id."""
    if set(gold) != set(pred):
        missing_pred = sorted(set(gold) - set(pred))
        missing_gold = sorted(set(pred) - set(gold))
        raise ValueError(
            f"note_id sets differ: missing from predictions {missing_pred[:5]}, "
            f"missing from gold {missing_gold[:5]}"
        )
    pairs: dict[Dimension, list[tuple[str, str]]] = {dim: [] for dim in DIMENSIONS}
    for note_id in gold:
        for dim, pair in compare_note(gold[note_id], pred[note_id]).items():
            pairs[dim].append(pair)
    matrices = {dim: build_confusion(pairs[dim], dim) for dim in DIMENSIONS}
    dims = []
    for dim in DIMENSIONS:
        metrics = all_class_metrics(matrices[dim])
        macro, weighted = averages(metrics)
        dims.append(DimensionMetrics(dim, tuple(metrics), macro, weighted))
    return matrices, MetricsTable(site, tuple(dims))


def evaluate_corpus(gold_notes, pred_notes) -> dict[str, tuple[dict, MetricsTable]]:
    """Per-site evaluation of two aligned corpora of annotated notes."""
    pred_by_id = {n.note.note_id: n.record for n in pred_notes}
    gold_by_id = {n.note.note_id: n.record for n in gold_notes}
    if set(gold_by_id) != set(pred_by_id):
        missing_pred = sorted(set(gold_by_id) - set(pred_by_id))
        missing_gold = sorted(set(pred_by_id) - set(gold_by_id))
        raise ValueError(
            f"note_id sets differ: missing from predictions {missing_pred[:5]}, "
            f"missing from gold {missing_gold[:5]}"
        )
    sites: dict[str, list] = {}
    for n in gold_notes:
        sites.setdefault(n.note.site_id, []).append(n)
    results = {}
    for site, notes in sorted(sites.items()):
        g = {n.note.note_id: n.record for n in notes}
        p = {nid: pred_by_id[nid] for nid in g}
        results[site] = evaluate_records(g, p, site=site)
    return results


# --------------------------------------------------------------------------
# learning curve

@dataclass(frozen=True)
class LearningCurve:
    step: int
    dimension: Dimension
    points: tuple[tuple[int, dict[Dimension, float | None]], ...]
    stabilization_size: int | None


def detect_stabilization(
    sizes: Sequence[int], values: Sequence[float], epsilon: float = 0.01, window: int = 2
) -> int | None:
    """Smallest size after which `window` consecutive deltas stay below epsilon.

    Returns None when the curve never exhibits a full window of small deltas.
    """
    if len(sizes) != len(values):
        raise ValueError("sizes and values must align")
    deltas = [abs(values[i + 1] - values[i]) for i in range(len(values) - 1)]
    for k in range(len(deltas) - window + 1):
        if all(d < epsilon for d in deltas[k : k + window]):
            return sizes[k]
    return None


def learning_curve(
    gold_notes,
    pred_records: dict[str, DiagnosisRecord | None],
    step: int = 30,
    epsilon: float = 0.01,
    window: int = 2,
    seed: int = 0,
    dimension: Dimension = Dimension.STATUS,
) -> LearningCurve:
    """Weighted F1 on seeded-shuffle prefixes of the gold pool, in fixed steps."""
    if step < 1:
        raise ValueError("step must be positive")
    if len(gold_notes) < step:
        raise ValueError(f"pool of {len(gold_notes)} notes is smaller than step {step}")
    pool = list(gold_notes)
    random.Random(seed).shuffle(pool)

    points = []
    tracked: list[float] = []
    sizes = list(range(step, len(pool) + 1, step))
    for size in sizes:
        prefix = pool[:size]
        gold = {n.note.note_id: n.record for n in prefix}
        pred = {nid: pred_records[nid] for nid in gold}
        _, table = evaluate_records(gold, pred, site="pool")
        f1s: dict[Dimension, float | None] = {}
        for dm in table.dimensions:
            f1s[dm.dimension] = dm.weighted.f1 if dm.weighted else None
        points.append((size, f1s))
        value = f1s[dimension]
        tracked.append(0.0 if value is None else value)

    stabilization = detect_stabilization(sizes, tracked, epsilon, window)
    return LearningCurve(step, dimension, tuple(points), stabilization)
