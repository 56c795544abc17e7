"""
Raster and vector instance models.

Defines the label-map, mask, contour and polygon types exchanged between
`infrastructure.mask_io`, the `geometry` package and the evaluation services.
Kept free of I/O so every module can depend on it without cycles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from .errors import GeometryError

Point = Tuple[float, float]
PixelPoint = Tuple[int, int]
BBox = Tuple[int, int, int, int]


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel instance-id raster; 0 is background."""

    width: int
    height: int
    values: np.ndarray
    image_id: str = ""

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise GeometryError(f"label map must be at least 1x1, got {self.width}x{self.height}")
        if self.values.shape != (self.height, self.width):
            raise GeometryError(
                f"label map buffer shape {self.values.shape} does not match {self.height}x{self.width}"
            )

    def instance_ids(self) -> Tuple[int, ...]:
        ids = np.unique(self.values)
        return tuple(int(i) for i in ids if i != 0)

    @property
    def foreground_pixels(self) -> int:
        return int(np.count_nonzero(self.values))


@dataclass(frozen=True, eq=False)
class Polygon:
    """Normalized polygon in YOLO label coordinates (x/W, y/H)."""

    vertices: Tuple[Point, ...]
    class_id: int = 0
    confidence: Optional[float] = None

    def __post_init__(self) -> None:
        if len(self.vertices) < 3:
            raise GeometryError(f"polygon needs at least 3 vertices, got {len(self.vertices)}")
        for x, y in self.vertices:
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise GeometryError(f"normalized vertex ({x}, {y}) outside [0,1]")
        if self.confidence is not None and not (0.0 <= self.confidence <= 1.0):
            raise GeometryError(f"confidence {self.confidence} outside [0,1]")

    def with_confidence(self, confidence: Optional[float]) -> "Polygon":
        return Polygon(vertices=self.vertices, class_id=self.class_id, confidence=confidence)


@dataclass(frozen=True, eq=False)
class InstanceMask:
    """Binary instance raster stored as its bounding-box crop.

    `bits` covers rows y_min..y_max and columns x_min..x_max of a
    `width` x `height` lattice. An empty mask has a 0x0 crop and is only
    produced by rasterizing degenerate polygons.
    """

    instance_id: int
    width: int
    height: int
    origin: PixelPoint
    bits: np.ndarray
    dropped_pixels: int = 0
    polygon: Optional[Polygon] = None
    pixel_count: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", np.ascontiguousarray(self.bits, dtype=bool))
        object.__setattr__(self, "pixel_count", int(np.count_nonzero(self.bits)))
        x0, y0 = self.origin
        h, w = self.bits.shape
        if x0 < 0 or y0 < 0 or x0 + w > self.width or y0 + h > self.height:
            raise GeometryError(
                f"mask crop at {self.origin} of size {w}x{h} exceeds {self.width}x{self.height} lattice"
            )

    @classmethod
    def from_full(cls, instance_id: int, full: np.ndarray, **extra) -> "InstanceMask":
        """Crop a full-lattice boolean raster to its tight bounding box."""
        full = np.asarray(full, dtype=bool)
        height, width = full.shape
        rows = np.flatnonzero(full.any(axis=1))
        if rows.size == 0:
            return cls.empty(instance_id, width, height, **extra)
        cols = np.flatnonzero(full.any(axis=0))
        y0, y1 = int(rows[0]), int(rows[-1])
        x0, x1 = int(cols[0]), int(cols[-1])
        return cls(
            instance_id=instance_id,
            width=width,
            height=height,
            origin=(x0, y0),
            bits=full[y0 : y1 + 1, x0 : x1 + 1],
            **extra,
        )

    @classmethod
    def from_crop(cls, instance_id: int, width: int, height: int, origin: PixelPoint, crop: np.ndarray, **extra) -> "InstanceMask":
        """Build a mask from a crop that may still carry empty margins."""
        crop = np.asarray(crop, dtype=bool)
        rows = np.flatnonzero(crop.any(axis=1))
        if rows.size == 0:
            return cls.empty(instance_id, width, height, **extra)
        cols = np.flatnonzero(crop.any(axis=0))
        y0, y1 = int(rows[0]), int(rows[-1])
        x0, x1 = int(cols[0]), int(cols[-1])
        return cls(
            instance_id=instance_id,
            width=width,
            height=height,
            origin=(origin[0] + x0, origin[1] + y0),
            bits=crop[y0 : y1 + 1, x0 : x1 + 1],
            **extra,
        )

    @classmethod
    def empty(cls, instance_id: int, width: int, height: int, **extra) -> "InstanceMask":
        return cls(
            instance_id=instance_id,
            width=width,
            height=height,
            origin=(0, 0),
            bits=np.zeros((0, 0), dtype=bool),
            **extra,
        )

    @property
    def is_empty(self) -> bool:
        return self.pixel_count == 0

    @property
    def lattice(self) -> Tuple[int, int]:
        return (self.width, self.height)

    @property
    def bbox(self) -> BBox:
        """(x_min, y_min, x_max, y_max), inclusive pixel indices."""
        if self.is_empty:
            raise GeometryError(f"instance {self.instance_id} is empty and has no bounding box")
        x0, y0 = self.origin
        h, w = self.bits.shape
        return (x0, y0, x0 + w - 1, y0 + h - 1)

    @property
    def centroid(self) -> Point:
        if self.is_empty:
            raise GeometryError(f"instance {self.instance_id} is empty and has no centroid")
        ys, xs = np.nonzero(self.bits)
        return (float(xs.mean()) + self.origin[0], float(ys.mean()) + self.origin[1])

    def to_full(self) -> np.ndarray:
        full = np.zeros((self.height, self.width), dtype=bool)
        if not self.is_empty:
            x0, y0 = self.origin
            h, w = self.bits.shape
            full[y0 : y0 + h, x0 : x0 + w] = self.bits
        return full

    def same_pixels(self, other: "InstanceMask") -> bool:
        return self.lattice == other.lattice and bool(np.array_equal(self.to_full(), other.to_full()))


@dataclass(frozen=True)
class Contour:
    """Closed chain of pixel-space vertices (last connects to first)."""

    vertices: Tuple[PixelPoint, ...]
    fallback: bool = False

    def __post_init__(self) -> None:
        if not self.vertices:
            raise GeometryError("contour needs at least one vertex")

    @property
    def degenerate(self) -> bool:
        return len(self.vertices) < 3

    @property
    def perimeter(self) -> float:
        n = len(self.vertices)
        if n < 2:
            return 0.0
        total = 0.0
        for i in range(n):
            x0, y0 = self.vertices[i]
            x1, y1 = self.vertices[(i + 1) % n]
            total += math.hypot(x1 - x0, y1 - y0)
        return total


@dataclass(frozen=True)
class SimplificationParams:
    alpha: float = 0.001

    def __post_init__(self) -> None:
        if self.alpha < 0 or not math.isfinite(self.alpha):
            raise GeometryError(f"simplification alpha must be >= 0, got {self.alpha}")

    def tolerance(self, contour: Contour) -> float:
        return self.alpha * contour.perimeter


Geometry = Union[Polygon, InstanceMask]


@dataclass(frozen=True)
class AnnotationSet:
    """Ground-truth instances of one image."""

    image_id: str
    width: int
    height: int
    instances: Tuple[Geometry, ...] = ()

    def __post_init__(self) -> None:
        for geom in self.instances:
            if isinstance(geom, InstanceMask) and geom.lattice != (self.width, self.height):
                raise GeometryError(
                    f"image {self.image_id}: instance {geom.instance_id} lattice {geom.lattice} "
                    f"differs from {self.width}x{self.height}"
                )


@dataclass(frozen=True)
class ScoredInstance:
    geometry: Geometry
    confidence: float
    source_index: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0) or math.isnan(self.confidence):
            raise GeometryError(f"confidence {self.confidence} outside [0,1]")


@dataclass(frozen=True)
class PredictionSet:
    """Scored predictions of one image, kept in input order."""

    image_id: str
    width: int
    height: int
    items: Tuple[ScoredInstance, ...] = ()

    def __post_init__(self) -> None:
        for item in self.items:
            geom = item.geometry
            if isinstance(geom, InstanceMask) and geom.lattice != (self.width, self.height):
                raise GeometryError(
                    f"image {self.image_id}: prediction {item.source_index} lattice {geom.lattice} "
                    f"differs from {self.width}x{self.height}"
                )

    @classmethod
    def from_pairs(cls, image_id: str, width: int, height: int, pairs) -> "PredictionSet":
        items = tuple(ScoredInstance(geometry=g, confidence=float(s), source_index=i) for i, (g, s) in enumerate(pairs))
        return cls(image_id=image_id, width=width, height=height, items=items)

    def filter_by_confidence(self, theta: float) -> "PredictionSet":
        kept = tuple(item for item in self.items if item.confidence >= theta)
        return PredictionSet(self.image_id, self.width, self.height, kept)

    @property
    def confidences(self) -> Tuple[float, ...]:
        return tuple(item.confidence for item in self.items)


@dataclass(frozen=True)
class DatasetStats:
    split: str
    image_count: int
    total_instances: int
    mean_instances: float
    median_instances: float
    min_instances: int
    max_instances: int
    coverage: float


@dataclass(frozen=True, eq=False)
class LuminanceImage:
    width: int
    height: int
    values: np.ndarray
    image_id: str = ""

    def __post_init__(self) -> None:
        if self.values.shape != (self.height, self.width):
            raise GeometryError(
                f"luminance buffer shape {self.values.shape} does not match {self.height}x{self.width}"
            )
