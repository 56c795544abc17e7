"""
Evaluation result models: match outcomes, metric reports, sweep curves,
compute profiles and error breakdowns.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from .masks import Point


@dataclass(frozen=True)
class Match:
    pred_index: int
    gt_index: int
    iou: float


@dataclass(frozen=True)
class MatchOutcome:
    """One-to-one assignment for a single image at IoU threshold `tau`.

    Prediction indices refer to positions in the (filtered) prediction list
    the outcome was computed from; GT indices to the annotation list.
    """

    image_id: str
    tau: float
    matches: Tuple[Match, ...]
    fp_indices: Tuple[int, ...]
    fn_indices: Tuple[int, ...]

    @property
    def tp(self) -> int:
        return len(self.matches)

    @property
    def fp(self) -> int:
        return len(self.fp_indices)

    @property
    def fn(self) -> int:
        return len(self.fn_indices)

    @property
    def gt_count(self) -> int:
        return self.tp + self.fn

    @property
    def pred_count(self) -> int:
        return self.tp + self.fp


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    mean_image_f1: float
    tau: float
    theta: float
    image_count: int = 0
    ap50: Optional[float] = None

    @property
    def gt_total(self) -> int:
        return self.tp + self.fn

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ComputeProfile:
    model: str
    parameter_count: int
    gflops: float
    per_image_times: Tuple[float, ...] = ()
    gpu_memory: Optional[float] = None


@dataclass(frozen=True)
class EfficiencyMetrics:
    e_f1: Optional[float]
    t_total: Optional[float]
    t_mean: Optional[float]
    image_count: int = 0


class SweepAxis(str, Enum):
    IOU = "iou_threshold"
    CONFIDENCE = "confidence_threshold"


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    report: MetricsReport


@dataclass(frozen=True)
class SweepCurve:
    axis: SweepAxis
    points: Tuple[SweepPoint, ...]

    @property
    def thresholds(self) -> Tuple[float, ...]:
        return tuple(p.threshold for p in self.points)

    @property
    def f1_values(self) -> Tuple[float, ...]:
        return tuple(p.report.f1 for p in self.points)


@dataclass(frozen=True)
class ThresholdSelection:
    axis: SweepAxis
    value: float
    objective: float
    curve: SweepCurve = field(repr=False)


class ErrorKind(str, Enum):
    FP = "FP"
    FN = "FN"


class ErrorCategory(str, Enum):
    BOUNDARY = "boundary"
    LOW_CONTRAST = "low_contrast"
    BACKGROUND_CLUTTER = "background_clutter"
    OCCLUDED = "occluded"
    UNCATEGORIZED = "uncategorized"


@dataclass(frozen=True)
class ErrorRecord:
    image_id: str
    kind: ErrorKind
    index: int
    category: ErrorCategory
    centroid: Point
    measurements: Dict[str, Optional[float]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "image_id": self.image_id,
            "error_kind": self.kind.value,
            "index": self.index,
            "category": self.category.value,
            "centroid": [self.centroid[0], self.centroid[1]],
            "measurements": dict(self.measurements),
        }


@dataclass(frozen=True)
class ErrorBreakdown:
    counts: Dict[ErrorKind, Dict[ErrorCategory, int]]
    records: Tuple[ErrorRecord, ...]
    precedence: Tuple[ErrorCategory, ...]

    def total(self, kind: ErrorKind) -> int:
        return sum(self.counts.get(kind, {}).values())

    def rows(self) -> List[Tuple[str, str, int]]:
        out = []
        for kind in ErrorKind:
            for category in ErrorCategory:
                if kind is ErrorKind.FN and category is ErrorCategory.BACKGROUND_CLUTTER:
                    continue
                out.append((kind.value, category.value, self.counts.get(kind, {}).get(category, 0)))
        return out


@dataclass(frozen=True)
class ReportBundle:
    """Everything one CLI run reports, plus what is needed to reproduce it."""

    command: str
    version: str
    config: Dict[str, Any]
    digests: Dict[str, str]
    metrics: Optional[MetricsReport] = None
    rates: Dict[str, Optional[float]] = field(default_factory=dict)
    efficiency: Optional[EfficiencyMetrics] = None
    profile: Optional[ComputeProfile] = None
    curves: Tuple[SweepCurve, ...] = ()
    selection: Optional[ThresholdSelection] = None
    degradation: Dict[str, Any] = field(default_factory=dict)
    breakdown: Optional[ErrorBreakdown] = None
    stats: Tuple[Dict[str, Any], ...] = ()
    diagnostics: Tuple[Dict[str, str], ...] = ()
