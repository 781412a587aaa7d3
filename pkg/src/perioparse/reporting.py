"""Report and chart-data emitters for evaluation results.

The text table mirrors the familiar grid: dimensions as rows with
macro/weighted sub-rows, sites as columns under each metric, two-decimal
rounding. CSV and JSON carry full precision. Chart payloads are plain JSON
arrays any plotting tool can consume.
"""

from __future__ import annotations

import csv
import io
import json

from .evaluation import ConfusionMatrix, LearningCurve, MetricsTable
from .model import Dimension

REPORT_FORMATS = ("text-table", "csv", "json")

DIMENSION_TITLES = {
    Dimension.STATUS: "Periodontal status",
    Dimension.STAGE: "Stage",
    Dimension.GRADE: "Grade",
    Dimension.EXTENT: "Extent",
    Dimension.SUBTYPE: "Subtype",
}

_METRIC_ATTRS = (("Precision", "precision"), ("Recall", "recall"), ("F1-score", "f1"))


def _fmt(value: float | None) -> str:
    return f"{value:.2f}" if value is not None else "-"


def render_text_table(tables: list[MetricsTable]) -> str:
    sites = [t.site for t in tables]
    label_width = max(
        [len("  Weighted")] + [len(DIMENSION_TITLES[d]) for d in DIMENSION_TITLES]
    )
    col = max([8] + [len(s) + 2 for s in sites])
    group_width = col * len(sites)

    lines = []
    header1 = " " * label_width + "".join(
        name.center(group_width) for name, _ in _METRIC_ATTRS
    )
    header2 = " " * label_width + "".join(
        site.rjust(col) for _ in _METRIC_ATTRS for site in sites
    )
    lines.append(header1.rstrip())
    lines.append(header2.rstrip())

    dimensions = tables[0].dimensions if tables else ()
    for dm in dimensions:
        lines.append(DIMENSION_TITLES[dm.dimension])
        for avg_name, attr in (("Macro", "macro"), ("Weighted", "weighted")):
            cells = []
            for _, metric_attr in _METRIC_ATTRS:
                for table in tables:
                    prf = getattr(table.for_dimension(dm.dimension), attr)
                    cells.append(
                        _fmt(getattr(prf, metric_attr) if prf is not None else None).rjust(col)
                    )
            lines.append(f"  {avg_name}".ljust(label_width) + "".join(cells))
    return "\n".join(lines) + "\n"


def render_csv(tables: list[MetricsTable]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(["site", "dimension", "average", "precision", "recall", "f1"])
    for table in tables:
        for dm in table.dimensions:
            for avg_name, prf in (("macro", dm.macro), ("weighted", dm.weighted)):
                row = [table.site, DIMENSION_TITLES[dm.dimension], avg_name]
                if prf is None:
                    row += ["", "", ""]
                else:
                    row += [repr(prf.precision), repr(prf.recall), repr(prf.f1)]
                writer.writerow(row)
    return buffer.getvalue()


def _prf_obj(prf) -> dict | None:
    if prf is None:
        return None
    return {"p": prf.precision, "r": prf.recall, "f1": prf.f1}


def tables_to_obj(tables: list[MetricsTable]) -> list[dict]:
    out = []
    for table in tables:
        for dm in table.dimensions:
            out.append(
                {
                    "site": table.site,
                    "dimension": DIMENSION_TITLES[dm.dimension],
                    "classes": [
                        {
                            "value": m.value,
                            "tp": m.tp,
                            "fp": m.fp,
                            "fn": m.fn,
                            "support": m.support,
                            "precision": m.precision,
                            "recall": m.recall,
                            "f1": m.f1,
                        }
                        for m in dm.classes
                    ],
                    "macro": _prf_obj(dm.macro),
                    "weighted": _prf_obj(dm.weighted),
                }
            )
    return out


def render_report(tables: list[MetricsTable], format: str = "text-table") -> str:
    """The metrics grid in the requested format; unknown names raise."""
    if format == "text-table":
        return render_text_table(tables)
    if format == "csv":
        return render_csv(tables)
    if format == "json":
        return json.dumps(tables_to_obj(tables), indent=2) + "\n"
    raise ValueError(f"unsupported report format {format!r}; expected one of {REPORT_FORMATS}")


def bar_chart_data(tables: list[MetricsTable]) -> dict:
    """Grouped-bar payload: one bar per (dimension, site, metric, average)."""
    bars = []
    for table in tables:
        for dm in table.dimensions:
            for avg_name, prf in (("macro", dm.macro), ("weighted", dm.weighted)):
                if prf is None:
                    continue
                for metric_name, attr in (
                    ("precision", "precision"),
                    ("recall", "recall"),
                    ("f1", "f1"),
                ):
                    bars.append(
                        {
                            "dimension": DIMENSION_TITLES[dm.dimension],
                            "site": table.site,
                            "average": avg_name,
                            "metric": metric_name,
                            "value": getattr(prf, attr),
                        }
                    )
    return {"chart": "grouped_bar", "bars": bars}


def confusion_chart_data(matrices_by_site: dict[str, dict[Dimension, ConfusionMatrix]]) -> dict:
    """Matrix-grid payload: classes and integer cell grid per site and dimension."""
    out = []
    for site, matrices in sorted(matrices_by_site.items()):
        for dim, matrix in matrices.items():
            out.append(
                {
                    "site": site,
                    "dimension": DIMENSION_TITLES[dim],
                    "classes": list(matrix.classes),
                    "cells": matrix.grid(),
                }
            )
    return {"chart": "confusion_matrices", "matrices": out}


def learning_curve_to_obj(curve: LearningCurve) -> dict:
    return {
        "step": curve.step,
        "dimension": DIMENSION_TITLES[curve.dimension],
        "stabilization_size": curve.stabilization_size,
        "points": [
            {
                "size": size,
                "weighted_f1": {
                    DIMENSION_TITLES[dim]: value for dim, value in f1s.items()
                },
            }
            for size, f1s in curve.points
        ],
    }
