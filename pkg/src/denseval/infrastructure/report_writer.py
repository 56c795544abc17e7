"""
CSV and JSON report emission.

Percentages carry 1 decimal and ratios 4; JSON keys are sorted. Together these
make every report byte-stable for identical inputs.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

from ..domain.masks import DatasetStats
from ..domain.metrics import ErrorBreakdown, ErrorKind, MetricsReport, ReportBundle, SweepCurve

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SWEEP_COLUMNS = ("threshold", "tp", "fp", "fn", "precision", "recall", "f1", "mean_image_f1")
METRICS_COLUMNS = (
    "tau",
    "theta",
    "images",
    "tp",
    "fp",
    "fn",
    "precision",
    "recall",
    "f1",
    "mean_image_f1",
    "ap50",
    "tp_rate",
    "fp_rate",
    "fn_rate",
)
BREAKDOWN_COLUMNS = ("error_kind", "category", "count")
STATS_COLUMNS = ("split", "images", "instances", "mean", "median", "min", "max", "coverage", "note")


def pct(value: Optional[float]) -> Optional[float]:
    """Fraction in [0,1] to a percentage rounded to 1 decimal."""
    return None if value is None else round(100.0 * value, 1)


def ratio(value: Optional[float]) -> Optional[float]:
    return None if value is None else round(value, 4)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.info("Wrote %s", path)
    return path


def write_json(path: PathLike, document: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def metrics_row(report: MetricsReport, rates: Mapping[str, Optional[float]]) -> Dict[str, Any]:
    return {
        "tau": ratio(report.tau),
        "theta": ratio(report.theta),
        "images": report.image_count,
        "tp": report.tp,
        "fp": report.fp,
        "fn": report.fn,
        "precision": pct(report.precision),
        "recall": pct(report.recall),
        "f1": pct(report.f1),
        "mean_image_f1": pct(report.mean_image_f1),
        "ap50": pct(report.ap50),
        "tp_rate": None if rates.get("tp_rate") is None else round(rates["tp_rate"], 1),
        "fp_rate": None if rates.get("fp_rate") is None else round(rates["fp_rate"], 1),
        "fn_rate": None if rates.get("fn_rate") is None else round(rates["fn_rate"], 1),
    }


def write_metrics_csv(path: PathLike, report: MetricsReport, rates: Mapping[str, Optional[float]]) -> Path:
    row = metrics_row(report, rates)
    return write_csv(path, METRICS_COLUMNS, [[row[c] for c in METRICS_COLUMNS]])


def sweep_rows(curve: SweepCurve) -> List[Dict[str, Any]]:
    return [
        {
            "threshold": ratio(point.threshold),
            "tp": point.report.tp,
            "fp": point.report.fp,
            "fn": point.report.fn,
            "precision": pct(point.report.precision),
            "recall": pct(point.report.recall),
            "f1": pct(point.report.f1),
            "mean_image_f1": pct(point.report.mean_image_f1),
        }
        for point in curve.points
    ]


def write_sweep_csv(path: PathLike, curve: SweepCurve) -> Path:
    return write_csv(path, SWEEP_COLUMNS, ([row[c] for c in SWEEP_COLUMNS] for row in sweep_rows(curve)))


def write_breakdown_csv(path: PathLike, breakdown: ErrorBreakdown) -> Path:
    return write_csv(path, BREAKDOWN_COLUMNS, breakdown.rows())


def stats_row(stats: DatasetStats) -> Dict[str, Any]:
    return {
        "split": stats.split,
        "images": stats.image_count,
        "instances": stats.total_instances,
        "mean": round(stats.mean_instances, 1),
        "median": round(stats.median_instances, 1),
        "min": stats.min_instances,
        "max": stats.max_instances,
        "coverage": round(stats.coverage, 1),
        "note": None,
    }


def write_stats_csv(path: PathLike, rows: Sequence[Dict[str, Any]]) -> Path:
    return write_csv(path, STATS_COLUMNS, ([row.get(c) for c in STATS_COLUMNS] for row in rows))


def breakdown_document(breakdown: ErrorBreakdown) -> Dict[str, Any]:
    counts: Dict[str, Dict[str, int]] = {}
    for kind, category, count in breakdown.rows():
        counts.setdefault(kind, {})[category] = count
    totals = {kind.value: breakdown.total(kind) for kind in ErrorKind}
    shares = {
        kind: {
            category: (round(100.0 * n / totals[kind], 1) if totals[kind] else None)
            for category, n in per_category.items()
        }
        for kind, per_category in counts.items()
    }
    return {
        "precedence": [c.value for c in breakdown.precedence],
        "counts": counts,
        "totals": totals,
        "percent_of_kind": shares,
    }


def _curve_document(curve: SweepCurve) -> Dict[str, Any]:
    return {"axis": curve.axis.value, "points": sweep_rows(curve)}


def bundle_document(bundle: ReportBundle) -> Dict[str, Any]:
    """JSON-ready view of a ReportBundle with fixed-precision numbers."""
    doc: Dict[str, Any] = {
        "command": bundle.command,
        "version": bundle.version,
        "config": bundle.config,
        "digests": dict(bundle.digests),
        "diagnostics": list(bundle.diagnostics),
    }
    if bundle.metrics is not None:
        doc["metrics"] = metrics_row(bundle.metrics, bundle.rates)
    if bundle.efficiency is not None:
        eff = bundle.efficiency
        doc["efficiency"] = {
            "e_f1": None if eff.e_f1 is None else round(eff.e_f1, 2),
            "t_total_ms": None if eff.t_total is None else round(eff.t_total, 4),
            "t_mean_ms": None if eff.t_mean is None else round(eff.t_mean, 4),
            "timed_images": eff.image_count,
        }
    if bundle.profile is not None:
        doc["profile"] = {
            "model": bundle.profile.model,
            "params": bundle.profile.parameter_count,
            "gflops": bundle.profile.gflops,
            "gpu_gb": bundle.profile.gpu_memory,
        }
    if bundle.curves:
        doc["curves"] = [_curve_document(c) for c in bundle.curves]
    if bundle.selection is not None:
        doc["selection"] = {
            "axis": bundle.selection.axis.value,
            "value": ratio(bundle.selection.value),
            "f1": pct(bundle.selection.objective),
        }
    if bundle.degradation:
        doc["degradation"] = dict(bundle.degradation)
    if bundle.breakdown is not None:
        doc["errors"] = breakdown_document(bundle.breakdown)
    if bundle.stats:
        doc["stats"] = list(bundle.stats)
    return doc


def write_bundle(path: PathLike, bundle: ReportBundle) -> Path:
    return write_json(path, bundle_document(bundle))


def write_error_details(path: PathLike, breakdown: ErrorBreakdown) -> Path:
    return write_json(path, {"records": [r.to_dict() for r in breakdown.records]})
