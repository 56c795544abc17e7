"""
Threshold-sensitivity protocols: IoU and confidence sweeps, operating-point
selection and degradation statistics.
"""

from __future__ import annotations

import logging
import math
from typing import List, Optional, Sequence, Tuple

from ..domain.errors import EvaluationError
from ..domain.masks import AnnotationSet, PredictionSet
from ..domain.metrics import SweepAxis, SweepCurve, SweepPoint, ThresholdSelection
from .diagnostics import Diagnostics
from .matching import ImagePair, IouCache, align_images, evaluate_pairs, parallel_map

logger = logging.getLogger(__name__)

_MATCH_TOLERANCE = 1e-9


def threshold_grid(start: float, stop: float, step: float) -> Tuple[float, ...]:
    """Inclusive arithmetic grid, rounded to 10 decimals to avoid drift."""
    if step <= 0:
        raise EvaluationError(f"grid step must be positive, got {step}")
    count = int(math.floor((stop - start) / step + _MATCH_TOLERANCE)) + 1
    return tuple(round(start + k * step, 10) for k in range(max(count, 0)))


DEFAULT_IOU_GRID = threshold_grid(0.05, 0.50, 0.05)
DEFAULT_CONFIDENCE_GRID = threshold_grid(0.15, 0.40, 0.05)


def validate_grid(thresholds: Sequence[float], axis: SweepAxis) -> Tuple[float, ...]:
    values = tuple(float(t) for t in thresholds)
    if not values:
        raise EvaluationError(f"{axis.value} grid is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise EvaluationError(f"{axis.value} grid must be strictly increasing: {list(values)}")
    if axis is SweepAxis.IOU and not all(0.0 < t <= 1.0 for t in values):
        raise EvaluationError(f"IoU thresholds must lie in (0,1]: {list(values)}")
    if axis is SweepAxis.CONFIDENCE and not all(0.0 <= t < 1.0 for t in values):
        raise EvaluationError(f"confidence thresholds must lie in [0,1): {list(values)}")
    return values


def sweep(
    pairs: Sequence[ImagePair],
    axis: SweepAxis,
    thresholds: Sequence[float],
    fixed: float,
    cache: Optional[IouCache] = None,
    empty_score: float = 1.0,
    threads: int = 1,
) -> SweepCurve:
    """Evaluate every grid point from scratch; `fixed` is theta on the IoU axis and tau on the confidence axis."""
    values = validate_grid(thresholds, axis)
    cache = cache if cache is not None else IouCache()
    cache.warm(pairs, threads)

    def point(threshold: float) -> SweepPoint:
        if axis is SweepAxis.IOU:
            report, _ = evaluate_pairs(pairs, tau=threshold, theta=fixed, cache=cache, empty_score=empty_score)
        else:
            report, _ = evaluate_pairs(pairs, tau=fixed, theta=threshold, cache=cache, empty_score=empty_score)
        return SweepPoint(threshold=threshold, report=report)

    curve = SweepCurve(axis=axis, points=tuple(parallel_map(point, list(values), threads)))
    logger.info("Swept %s over %d points", axis.value, len(curve.points))
    return curve


def iou_sweep(
    preds: Sequence[PredictionSet],
    gts: Sequence[AnnotationSet],
    thresholds: Sequence[float] = DEFAULT_IOU_GRID,
    theta: float = 0.0,
    threads: int = 1,
    diagnostics: Optional[Diagnostics] = None,
) -> SweepCurve:
    pairs = align_images(preds, gts, diagnostics, threads=threads)
    return sweep(pairs, SweepAxis.IOU, thresholds, fixed=theta, threads=threads)


def confidence_sweep(
    preds: Sequence[PredictionSet],
    gts: Sequence[AnnotationSet],
    thetas: Sequence[float] = DEFAULT_CONFIDENCE_GRID,
    tau: float = 0.15,
    threads: int = 1,
    diagnostics: Optional[Diagnostics] = None,
) -> SweepCurve:
    pairs = align_images(preds, gts, diagnostics, threads=threads)
    return sweep(pairs, SweepAxis.CONFIDENCE, thetas, fixed=tau, threads=threads)


def select_threshold(curve: SweepCurve) -> ThresholdSelection:
    """Smallest threshold attaining the maximal F1."""
    if not curve.points:
        raise EvaluationError("cannot select a threshold from an empty curve")
    best = min(curve.points, key=lambda p: (-p.report.f1, p.threshold))
    return ThresholdSelection(axis=curve.axis, value=best.threshold, objective=best.report.f1, curve=curve)


def f1_at(curve: SweepCurve, threshold: float) -> float:
    for point in curve.points:
        if abs(point.threshold - threshold) <= _MATCH_TOLERANCE:
            return point.report.f1
    raise EvaluationError(f"threshold {threshold} is not on the {curve.axis.value} curve {list(curve.thresholds)}")


def degradation_stats(curve: SweepCurve, from_threshold: float, to_threshold: float) -> float:
    """F1(from) - F1(to) in percentage points, 1 decimal."""
    delta = 100.0 * (f1_at(curve, from_threshold) - f1_at(curve, to_threshold))
    return round(delta, 1) + 0.0  # no -0.0


def relative_degradation(curve: SweepCurve, from_threshold: float, to_threshold: float) -> float:
    """Drop as a percentage of F1 at `from_threshold`."""
    start = f1_at(curve, from_threshold)
    if start == 0:
        raise EvaluationError(f"F1 at {from_threshold} is zero; relative degradation is undefined")
    return round(100.0 * (start - f1_at(curve, to_threshold)) / start, 1) + 0.0


def sensitivity_ratio(
    curve_a: SweepCurve, curve_b: SweepCurve, from_threshold: float, to_threshold: float
) -> Optional[float]:
    """How many times more F1 curve_a loses than curve_b over the same interval; None if curve_b is flat."""
    delta_b = degradation_stats(curve_b, from_threshold, to_threshold)
    if delta_b == 0:
        return None
    return round(degradation_stats(curve_a, from_threshold, to_threshold) / delta_b, 4)


def detect_non_monotonic(curve: SweepCurve, diagnostics: Optional[Diagnostics] = None) -> List[float]:
    """Thresholds at which F1 rises relative to the previous grid point."""
    rising = [
        b.threshold
        for a, b in zip(curve.points, curve.points[1:])
        if b.report.f1 > a.report.f1 + _MATCH_TOLERANCE
    ]
    if rising and diagnostics is not None:
        diagnostics.warn(
            "non_monotonic_sweep",
            f"F1 increases along {curve.axis.value} at {', '.join(f'{t:g}' for t in rising)}",
        )
    return rising


def _lens_iou(distance: float, radius: float) -> float:
    if distance >= 2 * radius:
        return 0.0
    half = distance / 2.0
    lens = 2 * radius**2 * math.acos(half / radius) - half * math.sqrt(4 * radius**2 - distance**2)
    return lens / (2 * math.pi * radius**2 - lens)


def disk_center_tolerance(radius: float, tau: float, iterations: int = 100) -> float:
    """Centre displacement at which two equal disks of `radius` reach IoU = tau."""
    if radius <= 0:
        raise EvaluationError(f"radius must be positive, got {radius}")
    if not (0.0 < tau <= 1.0):
        raise EvaluationError(f"IoU threshold must be in (0,1], got {tau}")
    lo, hi = 0.0, 2.0 * radius
    for _ in range(iterations):
        mid = (lo + hi) / 2.0
        if _lens_iou(mid, radius) >= tau:
            lo = mid
        else:
            hi = mid
    return lo
