"""
Rule-based categorization of false positives and false negatives.

Each error gets exactly one category: the first rule in the precedence list
that fires, otherwise `uncategorized`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..domain.errors import EvaluationError, GeometryError
from ..domain.masks import AnnotationSet, BBox, InstanceMask, LuminanceImage, Point, PredictionSet
from ..domain.metrics import ErrorBreakdown, ErrorCategory, ErrorKind, ErrorRecord, MatchOutcome
from ..geometry.raster import to_mask

logger = logging.getLogger(__name__)

DEFAULT_PRECEDENCE: Tuple[ErrorCategory, ...] = (
    ErrorCategory.BACKGROUND_CLUTTER,
    ErrorCategory.OCCLUDED,
    ErrorCategory.BOUNDARY,
    ErrorCategory.LOW_CONTRAST,
)


@dataclass(frozen=True)
class ErrorAnalysisParams:
    boundary_margin: float = 50.0
    contrast_cutoff: float = 30.0
    contrast_padding: int = 25
    clutter_radius: float = 100.0
    occlusion_radius: float = 200.0
    occlusion_min: int = 5
    precedence: Tuple[ErrorCategory, ...] = field(default=DEFAULT_PRECEDENCE)
    contrast_rule: bool = True

    def __post_init__(self) -> None:
        if self.boundary_margin < 0:
            raise EvaluationError(f"boundary margin must be >= 0, got {self.boundary_margin}")
        if self.contrast_padding < 0:
            raise EvaluationError(f"contrast padding must be >= 0, got {self.contrast_padding}")
        if self.clutter_radius <= 0 or self.occlusion_radius <= 0:
            raise EvaluationError("neighbourhood radii must be positive")
        if self.occlusion_min < 1:
            raise EvaluationError(f"occlusion minimum must be >= 1, got {self.occlusion_min}")
        precedence = tuple(ErrorCategory(c) for c in self.precedence)
        if ErrorCategory.UNCATEGORIZED in precedence or len(set(precedence)) != len(precedence):
            raise EvaluationError(f"invalid precedence {[c.value for c in precedence]}")
        object.__setattr__(self, "precedence", precedence)


def local_contrast(img: LuminanceImage, region: BBox) -> float:
    """Population standard deviation of luminance over `region` (inclusive) clipped to the image."""
    x0, y0, x1, y1 = region
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, img.width - 1), min(y1, img.height - 1)
    if x0 > x1 or y0 > y1:
        raise GeometryError(f"region {region} does not intersect the {img.width}x{img.height} image")
    window = np.asarray(img.values[y0 : y1 + 1, x0 : x1 + 1], dtype=np.float64)
    return float(window.std())


def _centroids(gts: AnnotationSet) -> np.ndarray:
    if not gts.instances:
        return np.zeros((0, 2), dtype=np.float64)
    return np.array(
        [to_mask(g, gts.width, gts.height).centroid for g in gts.instances],
        dtype=np.float64,
    )


def _count_within(centroids: np.ndarray, center: Point, radius: float, closed: bool = True) -> int:
    if centroids.size == 0:
        return 0
    d2 = (centroids[:, 0] - center[0]) ** 2 + (centroids[:, 1] - center[1]) ** 2
    inside = d2 <= radius * radius if closed else d2 < radius * radius
    return int(np.count_nonzero(inside))


def neighborhood_density(gts: Union[AnnotationSet, np.ndarray], center: Point, radius: float) -> int:
    """Ground-truth centroids within the closed ball of `radius` around `center`."""
    if radius <= 0:
        raise EvaluationError(f"radius must be positive, got {radius}")
    centroids = gts if isinstance(gts, np.ndarray) else _centroids(gts)
    return _count_within(centroids, center, radius)


def _edge_distance(center: Point, width: int, height: int) -> float:
    cx, cy = center
    # pixel centres run from 0 to width - 1
    return float(min(cx, cy, width - 1 - cx, height - 1 - cy))


def _classify(
    kind: ErrorKind,
    mask: InstanceMask,
    centroids: np.ndarray,
    img: Optional[LuminanceImage],
    params: ErrorAnalysisParams,
) -> Tuple[ErrorCategory, Point, Dict[str, Optional[float]]]:
    center = mask.centroid
    edge = _edge_distance(center, mask.width, mask.height)
    neighbours = _count_within(centroids, center, params.occlusion_radius)
    # a GT centroid exactly clutter_radius away does not rescue an FP
    clutter_hits = _count_within(centroids, center, params.clutter_radius, closed=False)
    contrast: Optional[float] = None
    if params.contrast_rule and img is not None:
        x0, y0, x1, y1 = mask.bbox
        pad = params.contrast_padding
        contrast = local_contrast(img, (x0 - pad, y0 - pad, x1 + pad, y1 + pad))

    fired = {
        ErrorCategory.BACKGROUND_CLUTTER: kind is ErrorKind.FP and clutter_hits == 0,
        ErrorCategory.OCCLUDED: neighbours >= params.occlusion_min,
        ErrorCategory.BOUNDARY: edge < params.boundary_margin,
        ErrorCategory.LOW_CONTRAST: contrast is not None and contrast < params.contrast_cutoff,
    }
    measurements: Dict[str, Optional[float]] = {
        "edge_distance": round(edge, 4),
        "neighbours": float(neighbours),
        "gt_within_clutter_radius": float(clutter_hits),
        "local_contrast": None if contrast is None else round(contrast, 4),
    }
    for category in params.precedence:
        if fired[category]:
            return category, center, measurements
    return ErrorCategory.UNCATEGORIZED, center, measurements


def categorize_errors(
    outcome: MatchOutcome,
    gts: AnnotationSet,
    preds: PredictionSet,
    img: Optional[LuminanceImage] = None,
    params: Optional[ErrorAnalysisParams] = None,
) -> ErrorBreakdown:
    """Assign each FP and FN of `outcome` one category.

    `preds` must be the prediction list the outcome indexes into (after
    confidence filtering). Without `img` the contrast rule never fires.
    """
    params = params or ErrorAnalysisParams()
    if img is not None and (img.width, img.height) != (gts.width, gts.height):
        raise GeometryError(
            f"image {gts.image_id}: luminance is {img.width}x{img.height}, labels are {gts.width}x{gts.height}"
        )
    centroids = _centroids(gts)
    counts: Dict[ErrorKind, Dict[ErrorCategory, int]] = {
        kind: {c: 0 for c in ErrorCategory} for kind in ErrorKind
    }
    records: List[ErrorRecord] = []

    def record(kind: ErrorKind, index: int, mask: InstanceMask) -> None:
        category, center, measurements = _classify(kind, mask, centroids, img, params)
        counts[kind][category] += 1
        records.append(
            ErrorRecord(
                image_id=gts.image_id,
                kind=kind,
                index=index,
                category=category,
                centroid=(round(center[0], 4), round(center[1], 4)),
                measurements=measurements,
            )
        )

    for p in outcome.fp_indices:
        item = preds.items[p]
        record(ErrorKind.FP, item.source_index, to_mask(item.geometry, preds.width, preds.height))
    for g in outcome.fn_indices:
        record(ErrorKind.FN, g, to_mask(gts.instances[g], gts.width, gts.height))
    return ErrorBreakdown(counts=counts, records=tuple(records), precedence=params.precedence)


def merge_breakdowns(breakdowns: Sequence[ErrorBreakdown], precedence: Sequence[ErrorCategory]) -> ErrorBreakdown:
    counts: Dict[ErrorKind, Dict[ErrorCategory, int]] = {kind: {c: 0 for c in ErrorCategory} for kind in ErrorKind}
    records: List[ErrorRecord] = []
    for breakdown in breakdowns:
        for kind, per_category in breakdown.counts.items():
            for category, n in per_category.items():
                counts[kind][category] += n
        records.extend(breakdown.records)
    return ErrorBreakdown(counts=counts, records=tuple(records), precedence=tuple(precedence))
