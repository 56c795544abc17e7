"""
Dataset artifact I/O: label-map PNGs, YOLO polygon label files, luminance
images, and split-level statistics.
"""

from __future__ import annotations

import logging
import statistics
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from ..domain.errors import GeometryError, LabelMapFormatError, PolygonParseError, UnsupportedGeometryError
from ..domain.masks import (
    AnnotationSet,
    DatasetStats,
    InstanceMask,
    LabelMap,
    LuminanceImage,
    Polygon,
    PredictionSet,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
_SINGLE_CHANNEL_MODES = {"L", "I;16", "I;16B", "I;16L", "I"}
_COORD_FORMAT = "{:.6f}"


def _open_image(path: Path) -> Image.Image:
    try:
        image = Image.open(path)
        image.load()
    except UnidentifiedImageError as exc:
        raise LabelMapFormatError(f"{path}: not a readable image") from exc
    return image


def load_label_map(path: PathLike) -> LabelMap:
    """Read an 8- or 16-bit single-channel PNG whose pixel values are instance ids."""
    path = Path(path)
    image = _open_image(path)
    if image.format not in (None, "PNG"):
        raise LabelMapFormatError(f"{path}: container {image.format} is not PNG")
    mode = image.mode
    if mode not in _SINGLE_CHANNEL_MODES:
        bands = len(image.getbands())
        if bands > 1:
            raise LabelMapFormatError(f"{path}: {bands} channels (mode {mode}); label maps must be single-channel")
        raise LabelMapFormatError(f"{path}: unsupported pixel mode {mode}; expected 8-bit or 16-bit grayscale")
    values = np.array(image)
    if mode == "I":
        # Pillow widens some 16-bit PNGs to 32-bit signed
        if values.size and (values.min() < 0 or values.max() > 0xFFFF):
            raise LabelMapFormatError(f"{path}: pixel values exceed 16-bit range")
        values = values.astype(np.uint16)
    values = values.astype(np.uint16 if values.dtype != np.uint8 else np.uint8, copy=False)
    height, width = values.shape
    return LabelMap(width=width, height=height, values=values, image_id=path.stem)


def save_label_map(label_map: LabelMap, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = label_map.values
    if values.size and int(values.max()) > 0xFF:
        image = Image.fromarray(values.astype(np.uint16))
    else:
        image = Image.fromarray(values.astype(np.uint8))
    image.save(path, format="PNG")


def _largest_component(component: np.ndarray) -> tuple[np.ndarray, int]:
    """Keep the largest 8-connected component; ties go to smaller y_min, then x_min."""
    labeled, count = ndimage.label(component, structure=_EIGHT_CONNECTED)
    if count <= 1:
        return component, 0
    sizes = np.bincount(labeled.ravel())[1:]
    slices = ndimage.find_objects(labeled)
    best = min(
        range(count),
        key=lambda k: (-int(sizes[k]), slices[k][0].start, slices[k][1].start),
    )
    kept = labeled == best + 1
    return kept, int(sizes.sum() - sizes[best])


def extract_instances(label_map: LabelMap) -> List[InstanceMask]:
    """One mask per non-zero id, ordered by id.

    Ids split over several 8-connected components keep only the largest one;
    the remaining pixels are recorded in `InstanceMask.dropped_pixels`.
    """
    values = label_map.values.astype(np.intp, copy=False)
    masks: List[InstanceMask] = []
    for index, window in enumerate(ndimage.find_objects(values)):
        if window is None:
            continue
        instance_id = index + 1
        crop = values[window] == instance_id
        crop, dropped = _largest_component(crop)
        if dropped:
            logger.warning(
                "Instance %d in %s spans several components; dropped %d pixels",
                instance_id,
                label_map.image_id or "<label map>",
                dropped,
            )
        origin = (window[1].start, window[0].start)
        masks.append(
            InstanceMask.from_crop(
                instance_id, label_map.width, label_map.height, origin, crop, dropped_pixels=dropped
            )
        )
    return masks


def parse_polygon_labels(
    text: str,
    width: int,
    height: int,
    expect_confidence: bool = False,
    image_id: str = "",
    source: Optional[str] = None,
) -> Union[AnnotationSet, PredictionSet]:
    polygons: List[Polygon] = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        fields = raw.split()
        if not fields:
            continue
        try:
            class_id = int(fields[0])
            numbers = [float(f) for f in fields[1:]]
        except ValueError as exc:
            raise PolygonParseError(f"non-numeric field ({exc})", line_number, source) from exc

        confidence = None
        if expect_confidence:
            if len(numbers) % 2 == 0:
                raise PolygonParseError("missing confidence value", line_number, source)
            confidence = numbers.pop()
            if not (0.0 <= confidence <= 1.0):
                raise PolygonParseError(f"confidence {confidence} outside [0,1]", line_number, source)
        elif len(numbers) % 2 == 1:
            raise PolygonParseError("odd coordinate count", line_number, source)

        if len(numbers) < 6:
            raise PolygonParseError(f"polygon needs at least 3 vertices, got {len(numbers) // 2}", line_number, source)
        for value in numbers:
            if not (0.0 <= value <= 1.0):
                raise PolygonParseError(f"coordinate {value} outside [0,1]", line_number, source)
        vertices = tuple(zip(numbers[0::2], numbers[1::2]))
        polygons.append(Polygon(vertices=vertices, class_id=class_id, confidence=confidence))

    if expect_confidence:
        return PredictionSet.from_pairs(image_id, width, height, [(p, p.confidence) for p in polygons])
    return AnnotationSet(image_id=image_id, width=width, height=height, instances=tuple(polygons))


def load_polygon_labels(
    path: PathLike, width: int, height: int, expect_confidence: bool = False
) -> Union[AnnotationSet, PredictionSet]:
    """Parse a YOLO segmentation label file (`class x1 y1 ... xn yn [conf]` per line)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_polygon_labels(text, width, height, expect_confidence, image_id=path.stem, source=str(path))


def _polygon_of(geometry) -> Polygon:
    if isinstance(geometry, Polygon):
        return geometry
    if geometry.polygon is None:
        raise UnsupportedGeometryError(
            f"instance {geometry.instance_id} is a raster mask without a polygon; convert it first"
        )
    return geometry.polygon


def format_polygon_line(polygon: Polygon, confidence: Optional[float] = None) -> str:
    fields = [str(polygon.class_id)]
    for x, y in polygon.vertices:
        fields.append(_COORD_FORMAT.format(x))
        fields.append(_COORD_FORMAT.format(y))
    if confidence is not None:
        fields.append(_COORD_FORMAT.format(confidence))
    return " ".join(fields)


def write_polygon_labels(labels: Union[AnnotationSet, PredictionSet]) -> str:
    """Serialize to label-file text; predictions carry their confidence as the last field."""
    if isinstance(labels, PredictionSet):
        lines = [format_polygon_line(_polygon_of(item.geometry), item.confidence) for item in labels.items]
    else:
        lines = [format_polygon_line(_polygon_of(geom), _polygon_of(geom).confidence) for geom in labels.instances]
    return "".join(line + "\n" for line in lines)


def save_polygon_labels(labels: Union[AnnotationSet, PredictionSet], path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(write_polygon_labels(labels), encoding="utf-8")


def compute_coverage(maps: Sequence[LabelMap], require_same_lattice: bool = True) -> float:
    """Percent of pixels, over all maps, that belong to some instance."""
    if not maps:
        raise GeometryError("coverage of an empty list of label maps is undefined")
    if require_same_lattice:
        lattice = (maps[0].width, maps[0].height)
        for label_map in maps[1:]:
            if (label_map.width, label_map.height) != lattice:
                raise GeometryError(
                    f"label map {label_map.image_id} is {label_map.width}x{label_map.height}, "
                    f"expected {lattice[0]}x{lattice[1]}"
                )
    foreground = sum(m.foreground_pixels for m in maps)
    total = sum(m.width * m.height for m in maps)
    return 100.0 * foreground / total


def compute_split_stats(maps: Sequence[LabelMap], split: str) -> DatasetStats:
    if not maps:
        raise GeometryError(f"split '{split}' has no images; statistics are undefined")
    # distinct non-zero ids == number of extracted instances
    counts = [len(m.instance_ids()) for m in maps]
    total = sum(counts)
    return DatasetStats(
        split=split,
        image_count=len(maps),
        total_instances=total,
        mean_instances=total / len(maps),
        median_instances=float(statistics.median(counts)),
        min_instances=min(counts),
        max_instances=max(counts),
        coverage=compute_coverage(maps, require_same_lattice=False),
    )


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec. 601 luma rounded to the nearest integer."""
    rgb = rgb.astype(np.float64)
    return np.rint(0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]).astype(np.uint8)


def load_luminance_image(path: PathLike, image_id: Optional[str] = None) -> LuminanceImage:
    path = Path(path)
    image = _open_image(path)
    if image.mode == "L":
        values = np.array(image, dtype=np.uint8)
    elif image.mode in ("RGB", "RGBA", "P", "LA"):
        values = luminance(np.array(image.convert("RGB")))
    else:
        raise LabelMapFormatError(f"{path}: unsupported image mode {image.mode} for luminance")
    height, width = values.shape
    return LuminanceImage(width=width, height=height, values=values, image_id=image_id or path.stem)


def save_luminance_image(image: LuminanceImage, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image.values, dtype=np.uint8)).save(path, format="PNG")


def instances_to_label_map(masks: Iterable[InstanceMask], width: int, height: int, image_id: str = "") -> LabelMap:
    values = np.zeros((height, width), dtype=np.uint16)
    for mask in masks:
        values[mask.to_full()] = mask.instance_id
    return LabelMap(width=width, height=height, values=values, image_id=image_id)
