"""
Label-map to polygon-label conversion.

Per instance: extract the largest 8-connected component, trace its external
contour, simplify with tolerance alpha * perimeter, normalize, and write one
YOLO line. The written polygon is rasterized back and compared with the
source mask to report round-trip fidelity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .. import __version__
from ..config import RunConfig
from ..domain.errors import ConfigError
from ..domain.masks import AnnotationSet, InstanceMask, LabelMap, Polygon, SimplificationParams
from ..geometry.contours import trace_external_contour
from ..geometry.raster import mask_iou, normalize_polygon, rasterize_polygon
from ..geometry.simplify import simplify_polygon
from ..infrastructure.manifest import ManifestEntry, load_manifest
from ..infrastructure.mask_io import extract_instances, load_label_map, save_polygon_labels
from ..infrastructure.report_writer import write_csv, write_json
from .diagnostics import Diagnostics
from .matching import parallel_map

logger = logging.getLogger(__name__)

FIDELITY_IOU = 0.95
CONVERSION_COLUMNS = (
    "split",
    "image_id",
    "instances",
    "written",
    "skipped",
    "fallbacks",
    "dropped_pixels",
    "mean_iou",
    "min_iou",
)


@dataclass(frozen=True)
class ImageConversion:
    split: str
    image_id: str
    instances: int
    written: int
    skipped: int
    fallbacks: int
    dropped_pixels: int
    ious: Tuple[float, ...]

    def row(self) -> List[object]:
        mean = round(float(np.mean(self.ious)), 4) if self.ious else None
        low = round(min(self.ious), 4) if self.ious else None
        return [
            self.split,
            self.image_id,
            self.instances,
            self.written,
            self.skipped,
            self.fallbacks,
            self.dropped_pixels,
            mean,
            low,
        ]


def quantize(polygon: Polygon) -> Polygon:
    """The polygon exactly as a 6-decimal label line will read back."""
    vertices = tuple((float(f"{x:.6f}"), float(f"{y:.6f}")) for x, y in polygon.vertices)
    return Polygon(vertices=vertices, class_id=polygon.class_id, confidence=polygon.confidence)


def mask_to_polygon(mask: InstanceMask, params: SimplificationParams, class_id: int = 0) -> Tuple[Optional[Polygon], bool]:
    """Polygon for one instance and whether the simplification fallback fired; None when degenerate."""
    contour = simplify_polygon(trace_external_contour(mask), params)
    if contour.degenerate:
        return None, contour.fallback
    return quantize(normalize_polygon(contour, mask.width, mask.height, class_id=class_id)), contour.fallback


def convert_label_map(
    label_map: LabelMap, params: SimplificationParams, diagnostics: Optional[Diagnostics] = None, split: str = ""
) -> Tuple[AnnotationSet, ImageConversion]:
    masks = extract_instances(label_map)
    polygons: List[Polygon] = []
    ious: List[float] = []
    skipped = fallbacks = 0
    for mask in masks:
        polygon, fell_back = mask_to_polygon(mask, params)
        fallbacks += int(fell_back)
        if polygon is None:
            skipped += 1
            if diagnostics is not None:
                diagnostics.warn(
                    "degenerate_instance",
                    f"instance {mask.instance_id} ({mask.pixel_count} px) has fewer than 3 contour vertices; skipped",
                    label_map.image_id,
                )
            continue
        polygons.append(polygon)
        ious.append(mask_iou(rasterize_polygon(polygon, label_map.width, label_map.height), mask))
    dropped = sum(m.dropped_pixels for m in masks)
    if dropped and diagnostics is not None:
        diagnostics.warn("dropped_pixels", f"{dropped} pixels in secondary components dropped", label_map.image_id)
    labels = AnnotationSet(label_map.image_id, label_map.width, label_map.height, tuple(polygons))
    summary = ImageConversion(
        split=split,
        image_id=label_map.image_id,
        instances=len(masks),
        written=len(polygons),
        skipped=skipped,
        fallbacks=fallbacks,
        dropped_pixels=dropped,
        ious=tuple(ious),
    )
    return labels, summary


class ConversionService:
    def __init__(self, config: RunConfig, diagnostics: Optional[Diagnostics] = None) -> None:
        self.config = config
        self.diagnostics = diagnostics if diagnostics is not None else Diagnostics()
        self.params = SimplificationParams(alpha=config.alpha)

    def _convert_entry(self, split: str, entry: ManifestEntry, out_dir: Path) -> ImageConversion:
        label_map = load_label_map(entry.labels)
        label_map = LabelMap(label_map.width, label_map.height, label_map.values, image_id=entry.image_id)
        labels, summary = convert_label_map(label_map, self.params, self.diagnostics, split)
        save_polygon_labels(labels, out_dir / split / f"{entry.image_id}.txt")
        return summary

    def run(self) -> Dict[str, object]:
        """Convert every split of the manifest and write the conversion report."""
        if not self.config.manifest:
            raise ConfigError("no dataset manifest configured (set 'manifest')")
        manifest = load_manifest(self.config.manifest)
        output_dir = Path(self.config.output_dir)
        label_dir = output_dir / "labels"

        summaries: List[ImageConversion] = []
        for split in manifest.split_names:
            entries = list(manifest.entries(split))
            summaries.extend(
                parallel_map(lambda e: self._convert_entry(split, e, label_dir), entries, self.config.threads)
            )
            logger.info("Converted %d label maps of split %s", len(entries), split)

        ious = [iou for s in summaries for iou in s.ious]
        report = {
            "command": "convert",
            "version": __version__,
            "config": self.config.echo(),
            "images": len(summaries),
            "instances": sum(s.instances for s in summaries),
            "written": sum(s.written for s in summaries),
            "skipped": sum(s.skipped for s in summaries),
            "fallbacks": sum(s.fallbacks for s in summaries),
            "dropped_pixels": sum(s.dropped_pixels for s in summaries),
            "round_trip_iou": {
                "mean": round(float(np.mean(ious)), 4) if ious else None,
                "min": round(min(ious), 4) if ious else None,
                "share_at_least_0_95": round(sum(i >= FIDELITY_IOU for i in ious) / len(ious), 4) if ious else None,
            },
            "digests": {"manifest": manifest.digest()},
            "diagnostics": self.diagnostics.to_list(),
        }
        write_csv(output_dir / "conversion.csv", CONVERSION_COLUMNS, (s.row() for s in summaries))
        write_json(output_dir / "conversion_report.json", report)
        return report
