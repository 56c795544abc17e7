"""
Instance matching and aggregate metrics.

Predictions are matched greedily in descending confidence; each takes the
unmatched ground truth of highest IoU at or above the threshold. Per-image
results reduce to integer TP/FP/FN sums, so fan-out order never changes a
report.
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from ..domain.errors import EvaluationError, GeometryError
from ..domain.masks import AnnotationSet, InstanceMask, PredictionSet, ScoredInstance
from ..domain.metrics import ComputeProfile, EfficiencyMetrics, Match, MatchOutcome, MetricsReport
from ..geometry.nms import nms
from ..geometry.raster import iou_matrix, to_mask
from .diagnostics import Diagnostics

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

AP_IOU_THRESHOLD = 0.5


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> List[R]:
    """Order-preserving map, fanned out over a thread pool when threads > 1."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _check_tau(tau: float) -> None:
    if not (0.0 < tau <= 1.0):
        raise EvaluationError(f"IoU threshold must be in (0,1], got {tau}")


@dataclass(frozen=True)
class ImagePair:
    """Ground truth and predictions of one image, both rasterized to non-empty masks."""

    gt: AnnotationSet
    preds: PredictionSet

    @property
    def image_id(self) -> str:
        return self.gt.image_id

    @property
    def gt_masks(self) -> Tuple[InstanceMask, ...]:
        return self.gt.instances  # type: ignore[return-value]

    @property
    def pred_masks(self) -> Tuple[InstanceMask, ...]:
        return tuple(item.geometry for item in self.preds.items)  # type: ignore[misc]


@dataclass(frozen=True)
class ImageEvaluation:
    pair: ImagePair
    kept: PredictionSet
    outcome: MatchOutcome


def rasterize_annotations(gts: AnnotationSet, diagnostics: Optional[Diagnostics] = None) -> AnnotationSet:
    masks = []
    for k, geometry in enumerate(gts.instances):
        mask = to_mask(geometry, gts.width, gts.height, instance_id=k + 1)
        if mask.is_empty:
            if diagnostics is not None:
                diagnostics.warn("empty_ground_truth", f"ground-truth instance {k} has zero area; skipped", gts.image_id)
            continue
        masks.append(mask)
    return AnnotationSet(gts.image_id, gts.width, gts.height, tuple(masks))


def rasterize_predictions(preds: PredictionSet, diagnostics: Optional[Diagnostics] = None) -> PredictionSet:
    items = []
    for item in preds.items:
        mask = to_mask(item.geometry, preds.width, preds.height, instance_id=item.source_index + 1)
        if mask.is_empty:
            if diagnostics is not None:
                diagnostics.warn(
                    "empty_prediction",
                    f"prediction {item.source_index} rasterizes to an empty mask; dropped before matching",
                    preds.image_id,
                )
            continue
        items.append(ScoredInstance(geometry=mask, confidence=item.confidence, source_index=item.source_index))
    return PredictionSet(preds.image_id, preds.width, preds.height, tuple(items))


def align_images(
    preds: Sequence[PredictionSet],
    gts: Sequence[AnnotationSet],
    diagnostics: Optional[Diagnostics] = None,
    tau_nms: Optional[float] = None,
    threads: int = 1,
) -> List[ImagePair]:
    """Pair prediction sets with ground truth by image id, in ground-truth order.

    Prediction images without ground truth are an error; ground-truth images
    without predictions are evaluated against an empty prediction set.
    """
    by_id: Dict[str, PredictionSet] = {}
    for pred in preds:
        if pred.image_id in by_id:
            raise EvaluationError(f"duplicate prediction set for image '{pred.image_id}'")
        by_id[pred.image_id] = pred
    gt_ids = {gt.image_id for gt in gts}
    orphans = [image_id for image_id in by_id if image_id not in gt_ids]
    if orphans:
        raise EvaluationError("prediction images without ground truth", orphans)

    def build(gt: AnnotationSet) -> ImagePair:
        pred = by_id.get(gt.image_id)
        if pred is None:
            if diagnostics is not None:
                diagnostics.warn("missing_predictions", "no predictions for this image; counted as empty", gt.image_id)
            pred = PredictionSet(gt.image_id, gt.width, gt.height, ())
        if (pred.width, pred.height) != (gt.width, gt.height):
            raise GeometryError(
                f"image {gt.image_id}: predictions are {pred.width}x{pred.height}, "
                f"ground truth is {gt.width}x{gt.height}"
            )
        raster = rasterize_predictions(pred, diagnostics)
        if tau_nms is not None:
            raster = nms(raster, tau_nms)
        return ImagePair(gt=rasterize_annotations(gt, diagnostics), preds=raster)

    return parallel_map(build, list(gts), threads)


class IouCache:
    """Per-image IoU matrices (rows: all predictions of the pair, columns: GT)."""

    def __init__(self) -> None:
        self._matrices: Dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def compute(self, pair: ImagePair) -> np.ndarray:
        return iou_matrix(pair.pred_masks, pair.gt_masks)

    def matrix(self, pair: ImagePair) -> np.ndarray:
        with self._lock:
            cached = self._matrices.get(pair.image_id)
        if cached is not None:
            return cached
        matrix = self.compute(pair)
        with self._lock:
            return self._matrices.setdefault(pair.image_id, matrix)

    def warm(self, pairs: Sequence[ImagePair], threads: int = 1) -> None:
        parallel_map(self.matrix, list(pairs), threads)

    def __len__(self) -> int:
        return len(self._matrices)


def match_from_matrix(
    ious: np.ndarray, confidences: Sequence[float], tau: float, image_id: str = ""
) -> MatchOutcome:
    """Greedy one-to-one assignment on a precomputed IoU matrix (rows: predictions)."""
    _check_tau(tau)
    n_pred, n_gt = ious.shape
    if len(confidences) != n_pred:
        raise EvaluationError(f"{len(confidences)} confidences for {n_pred} predictions")
    order = sorted(range(n_pred), key=lambda i: (-confidences[i], i))
    available = np.ones(n_gt, dtype=bool)
    matches: List[Match] = []
    fp: List[int] = []
    for i in order:
        row = ious[i]
        candidates = available & (row >= tau)
        if not candidates.any():
            fp.append(i)
            continue
        j = int(np.argmax(np.where(candidates, row, -1.0)))
        available[j] = False
        matches.append(Match(pred_index=i, gt_index=j, iou=float(row[j])))
    return MatchOutcome(
        image_id=image_id,
        tau=tau,
        matches=tuple(matches),
        fp_indices=tuple(sorted(fp)),
        fn_indices=tuple(int(j) for j in np.flatnonzero(available)),
    )


def _iou_matrix_with_empties(preds: Sequence[InstanceMask], gts: Sequence[InstanceMask]) -> np.ndarray:
    out = np.zeros((len(preds), len(gts)), dtype=np.float64)
    rows = [i for i, m in enumerate(preds) if not m.is_empty]
    cols = [j for j, m in enumerate(gts) if not m.is_empty]
    if rows and cols:
        out[np.ix_(rows, cols)] = iou_matrix([preds[i] for i in rows], [gts[j] for j in cols])
    return out


def match_instances(preds: PredictionSet, gts: AnnotationSet, tau: float) -> MatchOutcome:
    """Match one image's predictions to its ground truth at IoU threshold `tau`."""
    _check_tau(tau)
    if (preds.width, preds.height) != (gts.width, gts.height):
        raise GeometryError(
            f"lattice mismatch: predictions {preds.width}x{preds.height}, ground truth {gts.width}x{gts.height}"
        )
    pred_masks = [to_mask(item.geometry, preds.width, preds.height) for item in preds.items]
    gt_masks = [to_mask(g, gts.width, gts.height) for g in gts.instances]
    ious = _iou_matrix_with_empties(pred_masks, gt_masks)
    return match_from_matrix(ious, preds.confidences, tau, image_id=gts.image_id)


def prf(tp: int, fp: int, fn: int, empty_score: float = 1.0) -> Tuple[float, float, float]:
    """Precision, recall and F1 with totals for the degenerate cases.

    No predictions and no GT scores `empty_score` throughout; no predictions
    gives (1, 0, 0); no GT gives (0, 1, 0).
    """
    if tp + fp == 0 and fn == 0:
        return empty_score, empty_score, empty_score
    if tp + fp == 0:
        return 1.0, 0.0, 0.0
    if tp + fn == 0:
        return 0.0, 1.0, 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def mean_image_f1(outcomes: Sequence[MatchOutcome], empty_score: float = 1.0) -> float:
    if not outcomes:
        raise EvaluationError("mean image-level F1 of zero images is undefined")
    return sum(prf(o.tp, o.fp, o.fn, empty_score)[2] for o in outcomes) / len(outcomes)


def dataset_metrics(
    outcomes: Sequence[MatchOutcome],
    theta: float = 0.0,
    empty_score: float = 1.0,
    ap50: Optional[float] = None,
) -> MetricsReport:
    if not outcomes:
        raise EvaluationError("no images to aggregate")
    taus = {o.tau for o in outcomes}
    if len(taus) > 1:
        raise EvaluationError(f"outcomes mix IoU thresholds {sorted(taus)}")
    tp = sum(o.tp for o in outcomes)
    fp = sum(o.fp for o in outcomes)
    fn = sum(o.fn for o in outcomes)
    precision, recall, f1 = prf(tp, fp, fn, empty_score)
    return MetricsReport(
        tp=tp,
        fp=fp,
        fn=fn,
        precision=precision,
        recall=recall,
        f1=f1,
        mean_image_f1=mean_image_f1(outcomes, empty_score),
        tau=taus.pop(),
        theta=theta,
        image_count=len(outcomes),
        ap50=ap50,
    )


def _evaluate_pair(pair: ImagePair, tau: float, theta: float, cache: Optional[IouCache]) -> ImageEvaluation:
    ious = cache.matrix(pair) if cache is not None else iou_matrix(pair.pred_masks, pair.gt_masks)
    keep = [i for i, item in enumerate(pair.preds.items) if item.confidence >= theta]
    kept = PredictionSet(pair.preds.image_id, pair.preds.width, pair.preds.height, tuple(pair.preds.items[i] for i in keep))
    outcome = match_from_matrix(ious[keep], kept.confidences, tau, image_id=pair.image_id)
    return ImageEvaluation(pair=pair, kept=kept, outcome=outcome)


def evaluate_pairs(
    pairs: Sequence[ImagePair],
    tau: float,
    theta: float = 0.0,
    cache: Optional[IouCache] = None,
    empty_score: float = 1.0,
    threads: int = 1,
) -> Tuple[MetricsReport, List[ImageEvaluation]]:
    """Filter by confidence >= theta, match at tau and aggregate."""
    _check_tau(tau)
    evaluations = parallel_map(lambda p: _evaluate_pair(p, tau, theta, cache), list(pairs), threads)
    report = dataset_metrics([e.outcome for e in evaluations], theta=theta, empty_score=empty_score)
    return report, evaluations


def average_precision_from_pairs(pairs: Sequence[ImagePair], cache: Optional[IouCache] = None) -> float:
    total_gt = sum(len(p.gt.instances) for p in pairs)
    if total_gt == 0:
        raise EvaluationError("AP50 is undefined without ground-truth instances")
    ranked: List[Tuple[float, int, int, bool]] = []
    for image_order, pair in enumerate(pairs):
        ious = cache.matrix(pair) if cache is not None else iou_matrix(pair.pred_masks, pair.gt_masks)
        outcome = match_from_matrix(ious, pair.preds.confidences, AP_IOU_THRESHOLD, pair.image_id)
        hits = {m.pred_index for m in outcome.matches}
        for i, item in enumerate(pair.preds.items):
            ranked.append((-item.confidence, image_order, i, i in hits))
    if not ranked:
        return 0.0
    ranked.sort()
    is_tp = np.array([r[3] for r in ranked], dtype=bool)
    tp_cum = np.cumsum(is_tp)
    fp_cum = np.cumsum(~is_tp)
    recall = tp_cum / total_gt
    precision = tp_cum / (tp_cum + fp_cum)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate(([0.0], recall)))
    return float(np.sum(steps * envelope))


def average_precision_50(
    preds: Sequence[PredictionSet],
    gts: Sequence[AnnotationSet],
    cache: Optional[IouCache] = None,
) -> float:
    """Area under the enveloped precision-recall curve at IoU 0.5, all-point integration."""
    return average_precision_from_pairs(align_images(preds, gts), cache)


def efficiency_metrics(report: MetricsReport, profile: ComputeProfile) -> EfficiencyMetrics:
    """F1 points per GFLOP plus total and mean per-image runtime."""
    if profile.gflops <= 0:
        raise EvaluationError(f"GFLOPs must be positive for {profile.model}, got {profile.gflops}")
    e_f1 = 100.0 * report.f1 / profile.gflops
    times = profile.per_image_times
    if not times:
        return EfficiencyMetrics(e_f1=e_f1, t_total=None, t_mean=None, image_count=0)
    total = float(sum(times))
    return EfficiencyMetrics(e_f1=e_f1, t_total=total, t_mean=total / len(times), image_count=len(times))


def error_rates(report: MetricsReport) -> Dict[str, Optional[float]]:
    """TP, FP and FN as percentages of the ground-truth total."""
    gt = report.gt_total
    if gt == 0:
        return {"tp_rate": None, "fp_rate": None, "fn_rate": None}
    return {
        "tp_rate": 100.0 * report.tp / gt,
        "fp_rate": 100.0 * report.fp / gt,
        "fn_rate": 100.0 * report.fn / gt,
    }
