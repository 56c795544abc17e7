"""
Evaluation pipeline behind the evaluate, sweep, errors and stats commands.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .. import __version__
from ..config import RunConfig
from ..domain.errors import ConfigError, DensevalError, MissingImageError
from ..domain.masks import AnnotationSet, LuminanceImage, PredictionSet
from ..domain.metrics import ErrorBreakdown, ErrorCategory, MetricsReport, ReportBundle, SweepAxis
from ..infrastructure.digests import file_digest
from ..infrastructure.manifest import DatasetManifest, ManifestEntry, load_manifest
from ..infrastructure.mask_io import compute_split_stats, extract_instances, load_label_map, load_luminance_image
from ..infrastructure.prediction_index import open_prediction_source
from ..infrastructure.profile_reader import load_compute_profile
from ..infrastructure.report_writer import stats_row
from .diagnostics import Diagnostics
from .error_analysis import ErrorAnalysisParams, categorize_errors, merge_breakdowns
from .matching import (
    ImageEvaluation,
    ImagePair,
    IouCache,
    align_images,
    average_precision_from_pairs,
    efficiency_metrics,
    error_rates,
    evaluate_pairs,
    parallel_map,
)
from .sweeps import (
    degradation_stats,
    detect_non_monotonic,
    relative_degradation,
    select_threshold,
    sweep,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundTruth:
    manifest: DatasetManifest
    split: str
    entries: Tuple[ManifestEntry, ...]
    annotations: Tuple[AnnotationSet, ...]

    @property
    def lattices(self) -> Dict[str, Tuple[int, int]]:
        return {a.image_id: (a.width, a.height) for a in self.annotations}


def load_ground_truth(
    manifest: DatasetManifest, split: str, diagnostics: Diagnostics, threads: int = 1
) -> GroundTruth:
    entries = manifest.entries(split)

    def load(entry: ManifestEntry) -> AnnotationSet:
        label_map = load_label_map(entry.labels)
        masks = extract_instances(label_map)
        dropped = sum(m.dropped_pixels for m in masks)
        if dropped:
            diagnostics.warn("dropped_pixels", f"{dropped} pixels in secondary components dropped", entry.image_id)
        return AnnotationSet(entry.image_id, label_map.width, label_map.height, tuple(masks))

    annotations = tuple(parallel_map(load, list(entries), threads))
    logger.info(
        "Loaded %d ground-truth images (%d instances) for split %s",
        len(annotations),
        sum(len(a.instances) for a in annotations),
        split,
    )
    return GroundTruth(manifest=manifest, split=split, entries=entries, annotations=annotations)


class EvaluationService:
    """Loads a manifest and a prediction source once and answers every report request."""

    def __init__(self, config: RunConfig, diagnostics: Optional[Diagnostics] = None) -> None:
        self.config = config
        self.diagnostics = diagnostics if diagnostics is not None else Diagnostics()
        self.cache = IouCache()
        self._manifest: Optional[DatasetManifest] = None
        self._ground_truth: Optional[GroundTruth] = None
        self._predictions: Optional[List[PredictionSet]] = None
        self._pairs: Optional[List[ImagePair]] = None
        self._source = None

    # Inputs

    @property
    def manifest(self) -> DatasetManifest:
        if self._manifest is None:
            if not self.config.manifest:
                raise ConfigError("no dataset manifest configured (set 'manifest')")
            self._manifest = load_manifest(self.config.manifest)
        return self._manifest

    @property
    def ground_truth(self) -> GroundTruth:
        if self._ground_truth is None:
            self._ground_truth = load_ground_truth(
                self.manifest, self.config.split, self.diagnostics, self.config.threads
            )
        return self._ground_truth

    @property
    def predictions(self) -> List[PredictionSet]:
        if self._predictions is None:
            if not self.config.predictions:
                raise ConfigError("no predictions configured (set 'predictions')")
            self._source = open_prediction_source(self.config.predictions)
            self._predictions = self._source.load(self.ground_truth.lattices)
        return self._predictions

    @property
    def pairs(self) -> List[ImagePair]:
        if self._pairs is None:
            tau_nms = self.config.tau_nms if self.config.nms else None
            self._pairs = align_images(
                self.predictions,
                self.ground_truth.annotations,
                self.diagnostics,
                tau_nms=tau_nms,
                threads=self.config.threads,
            )
        return self._pairs

    def digests(self) -> Dict[str, str]:
        out = {
            "manifest": self.manifest.digest(),
            "ground_truth": self.manifest.label_digest(self.config.split),
        }
        if self.config.predictions:
            if self._source is None:
                self._source = open_prediction_source(self.config.predictions)
            out["predictions"] = self._source.digest()
        if self.config.profile:
            out["profile"] = file_digest(self.config.profile)
        return out

    def error_params(self) -> ErrorAnalysisParams:
        cfg = self.config
        return ErrorAnalysisParams(
            boundary_margin=cfg.boundary_margin,
            contrast_cutoff=cfg.contrast_cutoff,
            contrast_padding=cfg.contrast_padding,
            clutter_radius=cfg.clutter_radius,
            occlusion_radius=cfg.occlusion_radius,
            occlusion_min=cfg.occlusion_min,
            precedence=tuple(ErrorCategory(c) for c in cfg.precedence),
            contrast_rule=cfg.contrast_rule,
        )

    def _bundle(self, command: str, **fields) -> ReportBundle:
        return ReportBundle(
            command=command,
            version=__version__,
            config=self.config.echo(),
            digests=self.digests(),
            diagnostics=tuple(self.diagnostics.to_list()),
            **fields,
        )

    # Operations

    def operating_point(self) -> Tuple[List[ImageEvaluation], MetricsReport]:
        cfg = self.config
        report, evaluations = evaluate_pairs(
            self.pairs,
            tau=cfg.tau,
            theta=cfg.theta,
            cache=self.cache,
            empty_score=cfg.empty_score,
            threads=cfg.threads,
        )
        ap50 = None
        try:
            ap50 = average_precision_from_pairs(self.pairs, self.cache)
        except DensevalError as exc:
            self.diagnostics.warn("ap50_undefined", str(exc))
        return evaluations, replace(report, ap50=ap50)

    def evaluate(self) -> ReportBundle:
        """Metrics at the operating (tau, theta), AP50, efficiency and error breakdown."""
        evaluations, report = self.operating_point()
        efficiency = profile = None
        if self.config.profile:
            profile = load_compute_profile(self.config.profile)
            efficiency = efficiency_metrics(report, profile)
        breakdown = self.categorize(evaluations, strict=False)
        return self._bundle(
            "evaluate",
            metrics=report,
            rates=error_rates(report),
            efficiency=efficiency,
            profile=profile,
            breakdown=breakdown,
        )

    def sweep(self, axis: SweepAxis) -> ReportBundle:
        cfg = self.config
        if axis is SweepAxis.IOU:
            curve = sweep(
                self.pairs, axis, cfg.iou_thresholds, fixed=cfg.iou_sweep_theta,
                cache=self.cache, empty_score=cfg.empty_score, threads=cfg.threads,
            )
        else:
            curve = sweep(
                self.pairs, axis, cfg.confidence_thresholds, fixed=cfg.tau,
                cache=self.cache, empty_score=cfg.empty_score, threads=cfg.threads,
            )
        selection = select_threshold(curve)
        degradation: Dict[str, object] = {}
        if axis is SweepAxis.IOU:
            detect_non_monotonic(curve, self.diagnostics)
            thresholds = curve.thresholds
            if _on_grid(cfg.degradation_from, thresholds) and _on_grid(cfg.degradation_to, thresholds):
                degradation = {
                    "from": cfg.degradation_from,
                    "to": cfg.degradation_to,
                    "delta_f1": degradation_stats(curve, cfg.degradation_from, cfg.degradation_to),
                }
                try:
                    degradation["relative_percent"] = relative_degradation(
                        curve, cfg.degradation_from, cfg.degradation_to
                    )
                except DensevalError:
                    degradation["relative_percent"] = None
        return self._bundle("sweep", curves=(curve,), selection=selection, degradation=degradation)

    def luminance_images(self, strict: bool) -> Optional[Dict[str, LuminanceImage]]:
        """Intensity images for the contrast rule, or None when the rule cannot run."""
        if not self.config.contrast_rule:
            return None
        entries = self.ground_truth.entries
        missing = [str(e.image) if e.image else e.image_id for e in entries if e.image is None or not e.image.exists()]
        if missing:
            if strict:
                raise MissingImageError(missing)
            self.diagnostics.warn(
                "missing_images",
                f"contrast rule skipped; {len(missing)} luminance images are missing",
            )
            return None
        images = parallel_map(lambda e: load_luminance_image(e.image, e.image_id), list(entries), self.config.threads)
        return {img.image_id: img for img in images}

    def categorize(self, evaluations: Sequence[ImageEvaluation], strict: bool) -> ErrorBreakdown:
        params = self.error_params()
        images = self.luminance_images(strict)

        def run(evaluation: ImageEvaluation) -> ErrorBreakdown:
            img = images.get(evaluation.pair.image_id) if images else None
            return categorize_errors(evaluation.outcome, evaluation.pair.gt, evaluation.kept, img, params)

        breakdowns = parallel_map(run, list(evaluations), self.config.threads)
        return merge_breakdowns(breakdowns, params.precedence)

    def errors(self) -> ReportBundle:
        evaluations, report = self.operating_point()
        breakdown = self.categorize(evaluations, strict=True)
        return self._bundle("errors", metrics=report, rates=error_rates(report), breakdown=breakdown)

    def stats(self) -> ReportBundle:
        """One DatasetStats row per manifest split, in manifest order."""
        rows = []
        for split in self.manifest.split_names:
            entries = self.manifest.entries(split)
            if not entries:
                rows.append({"split": split, "note": "split has no images; statistics undefined"})
                continue
            maps = parallel_map(lambda e: load_label_map(e.labels), list(entries), self.config.threads)
            rows.append(stats_row(compute_split_stats(maps, split)))
        return ReportBundle(
            command="stats",
            version=__version__,
            config=self.config.echo(),
            digests={"manifest": self.manifest.digest()},
            stats=tuple(rows),
            diagnostics=tuple(self.diagnostics.to_list()),
        )


def _on_grid(value: float, thresholds: Sequence[float]) -> bool:
    return any(abs(value - t) <= 1e-9 for t in thresholds)
