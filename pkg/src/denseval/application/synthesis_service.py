"""
Synthetic ellipse-field datasets with predictors of known behaviour.

Profiles:
    exact    predictions are the ground-truth masks
    coarse   each mask is shifted (and optionally dilated) until its IoU with
             the ground truth falls in [synth_iou_low, synth_iou_high]
    dropout  each ground-truth mask is predicted with probability 1 - rate
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .. import __version__
from ..config import RunConfig
from ..domain.errors import SynthesisError
from ..domain.masks import InstanceMask, LuminanceImage, PredictionSet, ScoredInstance, SimplificationParams
from ..geometry.raster import mask_iou
from ..infrastructure.manifest import manifest_document
from ..infrastructure.mask_io import instances_to_label_map, save_label_map, save_luminance_image
from ..infrastructure.prediction_index import save_prediction_index
from ..infrastructure.report_writer import write_json
from .conversion_service import mask_to_polygon
from .diagnostics import Diagnostics

logger = logging.getLogger(__name__)

_PLACEMENT_ATTEMPTS = 200
_PERTURB_ATTEMPTS = 16
_GAP = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class SyntheticImage:
    image_id: str
    gt: Tuple[InstanceMask, ...]
    predictions: PredictionSet
    luminance: LuminanceImage


def ellipse_crop(center: Tuple[float, float], axes: Tuple[float, float], angle: float) -> Tuple[Tuple[int, int], np.ndarray]:
    """Pixels whose lattice points fall inside the ellipse, as (origin, crop)."""
    cx, cy = center
    a, b = axes
    reach = max(a, b) + 1
    x0, y0 = int(math.floor(cx - reach)), int(math.floor(cy - reach))
    x1, y1 = int(math.ceil(cx + reach)), int(math.ceil(cy + reach))
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    dx, dy = xs - cx, ys - cy
    cos, sin = math.cos(angle), math.sin(angle)
    u = dx * cos + dy * sin
    v = -dx * sin + dy * cos
    return (x0, y0), (u / a) ** 2 + (v / b) ** 2 <= 1.0


def clip_crop(instance_id: int, width: int, height: int, origin: Tuple[int, int], crop: np.ndarray) -> InstanceMask:
    """Mask from a crop that may hang over the lattice edge."""
    x0, y0 = origin
    h, w = crop.shape
    cx0, cy0 = max(0, -x0), max(0, -y0)
    cx1, cy1 = min(w, width - x0), min(h, height - y0)
    if cx0 >= cx1 or cy0 >= cy1:
        return InstanceMask.empty(instance_id, width, height)
    return InstanceMask.from_crop(instance_id, width, height, (x0 + cx0, y0 + cy0), crop[cy0:cy1, cx0:cx1])


class EllipseField:
    """Rejection-sampled non-overlapping ellipses on one lattice."""

    def __init__(self, width: int, height: int, min_axis: float, max_axis: float, rng: np.random.Generator) -> None:
        self.width = width
        self.height = height
        self.min_axis = min_axis
        self.max_axis = max_axis
        self.rng = rng
        self.occupied = np.zeros((height, width), dtype=bool)

    def place(self, instance_id: int) -> InstanceMask:
        margin = self.max_axis + 3
        if self.width <= 2 * margin or self.height <= 2 * margin:
            raise SynthesisError(
                f"lattice {self.width}x{self.height} is too small for ellipses with semi-axis {self.max_axis}"
            )
        for _ in range(_PLACEMENT_ATTEMPTS):
            center = (
                float(self.rng.uniform(margin, self.width - margin)),
                float(self.rng.uniform(margin, self.height - margin)),
            )
            axes = (
                float(self.rng.uniform(self.min_axis, self.max_axis)),
                float(self.rng.uniform(self.min_axis, self.max_axis)),
            )
            angle = float(self.rng.uniform(0.0, math.pi))
            (x0, y0), crop = ellipse_crop(center, axes, angle)
            h, w = crop.shape
            # one free pixel between instances
            halo = ndimage.binary_dilation(np.pad(crop, 1), structure=_GAP)
            if (halo & self.occupied[y0 - 1 : y0 + h + 1, x0 - 1 : x0 + w + 1]).any():
                continue
            self.occupied[y0 : y0 + h, x0 : x0 + w] |= crop
            return InstanceMask.from_crop(instance_id, self.width, self.height, (x0, y0), crop)
        raise SynthesisError(
            f"could not place instance {instance_id} on a {self.width}x{self.height} lattice "
            f"after {_PLACEMENT_ATTEMPTS} attempts; lower synth_instances or the ellipse size"
        )


def shift_mask(mask: InstanceMask, dx: int, dy: int) -> InstanceMask:
    x0, y0 = mask.origin
    return clip_crop(mask.instance_id, mask.width, mask.height, (x0 + dx, y0 + dy), mask.bits)


def dilate_mask(mask: InstanceMask, iterations: int) -> InstanceMask:
    if iterations <= 0:
        return mask
    grown = ndimage.binary_dilation(np.pad(mask.bits, iterations), iterations=iterations)
    x0, y0 = mask.origin
    return clip_crop(mask.instance_id, mask.width, mask.height, (x0 - iterations, y0 - iterations), grown)


def coarsen(
    mask: InstanceMask, low: float, high: float, rng: np.random.Generator, dilate: int = 0
) -> Optional[InstanceMask]:
    """Shift (after optional dilation) to an IoU with `mask` drawn uniformly from [low, high]."""
    target = float(rng.uniform(low, high))
    base = dilate_mask(mask, dilate)
    if mask_iou(base, mask) < target:
        base = mask
    reach = 2 * max(mask.bits.shape)
    for _ in range(_PERTURB_ATTEMPTS):
        angle = float(rng.uniform(0.0, 2 * math.pi))
        best: Optional[InstanceMask] = None
        best_gap = math.inf
        previous = None
        for step in range(0, 2 * reach + 1):
            d = step / 2.0
            dx, dy = int(round(d * math.cos(angle))), int(round(d * math.sin(angle)))
            if (dx, dy) == previous:
                continue
            previous = (dx, dy)
            candidate = shift_mask(base, dx, dy)
            if candidate.is_empty:
                break
            iou = mask_iou(candidate, mask)
            if low <= iou <= high and abs(iou - target) < best_gap:
                best, best_gap = candidate, abs(iou - target)
            if iou < low:
                break
        if best is not None:
            return best
    return None


class SynthesisService:
    def __init__(self, config: RunConfig, diagnostics: Optional[Diagnostics] = None) -> None:
        self.config = config
        self.diagnostics = diagnostics if diagnostics is not None else Diagnostics()
        self.rng = np.random.default_rng(config.seed)

    def _confidence(self, low: float = 0.5, high: float = 1.0) -> float:
        return round(float(self.rng.uniform(low, high)), 4)

    def _luminance(self, image_id: str, gt: List[InstanceMask]) -> LuminanceImage:
        cfg = self.config
        values = self.rng.normal(90.0, 12.0, size=(cfg.synth_height, cfg.synth_width))
        for mask in gt:
            level = self.rng.uniform(100.0, 200.0)
            x0, y0 = mask.origin
            h, w = mask.bits.shape
            window = values[y0 : y0 + h, x0 : x0 + w]
            window[mask.bits] = level + self.rng.normal(0.0, 12.0, size=int(mask.pixel_count))
        pixels = np.clip(np.rint(values), 0, 255).astype(np.uint8)
        return LuminanceImage(cfg.synth_width, cfg.synth_height, pixels, image_id=image_id)

    def _predict(self, image_id: str, field: EllipseField, gt: List[InstanceMask]) -> PredictionSet:
        cfg = self.config
        pairs: List[Tuple[InstanceMask, float]] = []
        for mask in gt:
            if cfg.synth_profile == "exact":
                pairs.append((mask, self._confidence()))
            elif cfg.synth_profile == "dropout":
                keep = self.rng.random() >= cfg.synth_dropout
                confidence = self._confidence()
                if keep:
                    pairs.append((mask, confidence))
            else:
                coarse = coarsen(mask, cfg.synth_iou_low, cfg.synth_iou_high, self.rng, cfg.synth_dilate)
                if coarse is None:
                    self.diagnostics.warn(
                        "coarse_target_missed",
                        f"instance {mask.instance_id}: no shift reaches the IoU band; predicted exactly",
                        image_id,
                    )
                    coarse = mask
                pairs.append((coarse, self._confidence()))
        for k in range(cfg.synth_spurious):
            spurious = field.place(len(gt) + k + 1)
            pairs.append((spurious, self._confidence(0.15, 0.6)))
        items = tuple(
            ScoredInstance(
                geometry=InstanceMask(i + 1, m.width, m.height, m.origin, m.bits), confidence=s, source_index=i
            )
            for i, (m, s) in enumerate(pairs)
        )
        return PredictionSet(image_id, cfg.synth_width, cfg.synth_height, items)

    def generate_image(self, index: int) -> SyntheticImage:
        cfg = self.config
        image_id = f"synth_{index:04d}"
        field = EllipseField(cfg.synth_width, cfg.synth_height, cfg.synth_min_axis, cfg.synth_max_axis, self.rng)
        gt = [field.place(i + 1) for i in range(cfg.synth_instances)]
        predictions = self._predict(image_id, field, gt)
        luminance = self._luminance(image_id, gt)
        return SyntheticImage(image_id=image_id, gt=tuple(gt), predictions=predictions, luminance=luminance)

    def _as_polygons(self, predictions: PredictionSet) -> PredictionSet:
        params = SimplificationParams(alpha=self.config.alpha)
        items = []
        for item in predictions.items:
            polygon, _ = mask_to_polygon(item.geometry, params)
            if polygon is None:
                continue
            items.append(ScoredInstance(polygon.with_confidence(item.confidence), item.confidence, len(items)))
        return PredictionSet(predictions.image_id, predictions.width, predictions.height, tuple(items))

    def run(self) -> dict:
        """Write label maps, luminance images, predictions and a manifest under output_dir."""
        cfg = self.config
        out = Path(cfg.output_dir)
        entries = []
        prediction_sets = []
        instance_total = prediction_total = 0
        # sequential: the generator stream fixes the output
        for index in range(cfg.synth_images):
            image = self.generate_image(index)
            label_map = instances_to_label_map(image.gt, cfg.synth_width, cfg.synth_height, image.image_id)
            save_label_map(label_map, out / "labels" / f"{image.image_id}.png")
            save_luminance_image(image.luminance, out / "images" / f"{image.image_id}.png")
            entries.append((f"images/{image.image_id}.png", f"labels/{image.image_id}.png"))
            predictions = image.predictions if cfg.synth_rle else self._as_polygons(image.predictions)
            prediction_sets.append(predictions)
            instance_total += len(image.gt)
            prediction_total += len(predictions.items)

        save_prediction_index(prediction_sets, out / "predictions.json", use_rle=cfg.synth_rle)
        manifest_path = out / "manifest.json"
        manifest_path.write_text(
            json.dumps(manifest_document({cfg.split: entries}), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        summary = {
            "command": "synth",
            "version": __version__,
            "config": cfg.echo(),
            "images": cfg.synth_images,
            "instances": instance_total,
            "predictions": prediction_total,
            "manifest": "manifest.json",
            "predictions_file": "predictions.json",
            "diagnostics": self.diagnostics.to_list(),
        }
        write_json(out / "synth_report.json", summary)
        logger.info("Synthesized %d images with %d instances into %s", cfg.synth_images, instance_total, out)
        return summary
