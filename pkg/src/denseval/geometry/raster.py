"""
Lattice operations: coordinate normalization, polygon rasterization, mask IoU
and the row-major run-length codec.

Pixel (px, py) is sampled at the lattice point (px, py), the same convention
contour vertices use, so a traced boundary passes through the centres of its
boundary pixels. Polygons are closed sets: centres on an edge are inside.
Lattice points within `_SNAP` of the boundary count as on it, which absorbs
the 6-decimal rounding of serialized label files.
"""

from __future__ import annotations

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np

from ..domain.errors import GeometryError
from ..domain.masks import Contour, Geometry, InstanceMask, Point, Polygon

logger = logging.getLogger(__name__)

_EPS = 1e-9
_SNAP = 1e-3


def normalize_polygon(contour: Contour, width: int, height: int, class_id: int = 0) -> Polygon:
    for x, y in contour.vertices:
        if not (0 <= x <= width and 0 <= y <= height):
            raise GeometryError(f"vertex ({x}, {y}) outside the {width}x{height} image")
    vertices = tuple((x / width, y / height) for x, y in contour.vertices)
    return Polygon(vertices=vertices, class_id=class_id)


def denormalize_polygon(poly: Polygon, width: int, height: int) -> Contour:
    vertices = tuple((int(round(x * width)), int(round(y * height))) for x, y in poly.vertices)
    return Contour(vertices=vertices)


def polygon_area(points: Sequence[Point]) -> float:
    """Unsigned shoelace area."""
    pts = np.asarray(points, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _fill_pixel_polygon(points: np.ndarray, width: int, height: int) -> Tuple[np.ndarray, Tuple[int, int]]:
    """Even-odd scanline fill of a pixel-space polygon; returns (crop, origin)."""
    x_min = max(0, int(math.ceil(points[:, 0].min() - _SNAP)))
    x_max = min(width - 1, int(math.floor(points[:, 0].max() + _SNAP)))
    y_min = max(0, int(math.ceil(points[:, 1].min() - _SNAP)))
    y_max = min(height - 1, int(math.floor(points[:, 1].max() + _SNAP)))
    if x_min > x_max or y_min > y_max:
        return np.zeros((0, 0), dtype=bool), (0, 0)

    crop = np.zeros((y_max - y_min + 1, x_max - x_min + 1), dtype=bool)
    x0 = points[:, 0]
    y0 = points[:, 1]
    x1 = np.roll(x0, -1)
    y1 = np.roll(y0, -1)
    sloped = y0 != y1

    for row in range(y_min, y_max + 1):
        # half-open rule on edges so shared vertices are counted once
        hit = sloped & (((y0 <= row) & (row < y1)) | ((y1 <= row) & (row < y0)))
        if hit.any():
            xs = x0[hit] + (row - y0[hit]) * (x1[hit] - x0[hit]) / (y1[hit] - y0[hit])
            xs.sort()
            for left, right in zip(xs[0::2], xs[1::2]):
                a = max(x_min, int(math.ceil(left - _SNAP)))
                b = min(x_max, int(math.floor(right + _SNAP)))
                if a <= b:
                    crop[row - y_min, a - x_min : b - x_min + 1] = True

    # closed boundary: lattice points lying on an edge
    for ax, ay, bx, by in zip(x0, y0, x1, y1):
        if ay == by:
            if abs(ay - round(ay)) < _SNAP:
                row = int(round(ay))
                if y_min <= row <= y_max:
                    a = max(x_min, int(math.ceil(min(ax, bx) - _SNAP)))
                    b = min(x_max, int(math.floor(max(ax, bx) + _SNAP)))
                    if a <= b:
                        crop[row - y_min, a - x_min : b - x_min + 1] = True
            continue
        lo = max(y_min, int(math.ceil(min(ay, by) - _SNAP)))
        hi = min(y_max, int(math.floor(max(ay, by) + _SNAP)))
        for row in range(lo, hi + 1):
            x = ax + (row - ay) * (bx - ax) / (by - ay)
            col = int(round(x))
            if abs(x - col) < _SNAP and x_min <= col <= x_max:
                crop[row - y_min, col - x_min] = True

    return crop, (x_min, y_min)


def rasterize_polygon(poly: Polygon, width: int, height: int, instance_id: int = 0) -> InstanceMask:
    """Rasterize a normalized polygon onto a width x height lattice.

    Zero-area polygons yield an empty mask; callers drop those before matching.
    """
    points = np.asarray(poly.vertices, dtype=np.float64) * np.array([width, height], dtype=np.float64)
    if polygon_area(points) <= _EPS:
        logger.debug("Polygon with zero area rasterized to an empty mask")
        return InstanceMask.empty(instance_id, width, height, polygon=poly)
    crop, origin = _fill_pixel_polygon(points, width, height)
    return InstanceMask.from_crop(instance_id, width, height, origin, crop, polygon=poly)


def to_mask(geometry: Geometry, width: int, height: int, instance_id: int = 0) -> InstanceMask:
    if isinstance(geometry, InstanceMask):
        return geometry
    return rasterize_polygon(geometry, width, height, instance_id=instance_id)


def _check_lattice(a: InstanceMask, b: InstanceMask) -> None:
    if a.lattice != b.lattice:
        raise GeometryError(f"lattice mismatch: {a.lattice} vs {b.lattice}")


def intersection_area(a: InstanceMask, b: InstanceMask) -> int:
    _check_lattice(a, b)
    if a.is_empty or b.is_empty:
        return 0
    ax0, ay0, ax1, ay1 = a.bbox
    bx0, by0, bx1, by1 = b.bbox
    x0, y0 = max(ax0, bx0), max(ay0, by0)
    x1, y1 = min(ax1, bx1), min(ay1, by1)
    if x0 > x1 or y0 > y1:
        return 0
    wa = a.bits[y0 - ay0 : y1 - ay0 + 1, x0 - ax0 : x1 - ax0 + 1]
    wb = b.bits[y0 - by0 : y1 - by0 + 1, x0 - bx0 : x1 - bx0 + 1]
    return int(np.count_nonzero(wa & wb))


def mask_iou(a: InstanceMask, b: InstanceMask) -> float:
    """|a & b| / |a | b| on a shared lattice."""
    inter = intersection_area(a, b)
    union = a.pixel_count + b.pixel_count - inter
    if union == 0:
        raise GeometryError("IoU of two empty masks is undefined")
    return inter / union


def iou_matrix(preds: Sequence[InstanceMask], gts: Sequence[InstanceMask]) -> np.ndarray:
    """Pairwise IoU, rows = predictions, columns = ground truth."""
    out = np.zeros((len(preds), len(gts)), dtype=np.float64)
    if not len(preds) or not len(gts):
        return out
    gt_boxes = np.array([g.bbox for g in gts], dtype=np.int64)
    for i, p in enumerate(preds):
        px0, py0, px1, py1 = p.bbox
        overlaps = np.flatnonzero(
            (gt_boxes[:, 0] <= px1) & (gt_boxes[:, 2] >= px0) & (gt_boxes[:, 1] <= py1) & (gt_boxes[:, 3] >= py0)
        )
        for j in overlaps:
            out[i, j] = mask_iou(p, gts[j])
    return out


def rle_encode(mask: InstanceMask) -> List[int]:
    """Row-major alternating run lengths over the full lattice, zeros first."""
    total = mask.width * mask.height
    if mask.is_empty:
        return [total]
    ys, xs = np.nonzero(mask.bits)
    flat = (ys + mask.origin[1]).astype(np.int64) * mask.width + xs + mask.origin[0]
    breaks = np.flatnonzero(np.diff(flat) != 1)
    starts = np.concatenate(([flat[0]], flat[breaks + 1]))
    ends = np.concatenate((flat[breaks] + 1, [flat[-1] + 1]))
    runs: List[int] = []
    cursor = 0
    for s, e in zip(starts.tolist(), ends.tolist()):
        runs.append(s - cursor)
        runs.append(e - s)
        cursor = e
    if cursor < total:
        runs.append(total - cursor)
    return runs


def rle_decode(runs: Sequence[int], width: int, height: int, instance_id: int = 0) -> InstanceMask:
    total = width * height
    if any(r < 0 for r in runs):
        raise GeometryError("RLE runs must be non-negative")
    if sum(runs) != total:
        raise GeometryError(f"RLE length mismatch: runs sum to {sum(runs)}, lattice has {total} pixels")
    bounds = np.cumsum(np.asarray([0, *runs], dtype=np.int64))
    starts = bounds[1::2][: len(runs) // 2]
    ends = bounds[2::2][: len(runs) // 2]
    if starts.size == 0 or int((ends - starts).sum()) == 0:
        return InstanceMask.empty(instance_id, width, height)
    flat = np.concatenate([np.arange(s, e, dtype=np.int64) for s, e in zip(starts, ends) if e > s])
    ys, xs = np.divmod(flat, width)
    x0, y0 = int(xs.min()), int(ys.min())
    crop = np.zeros((int(ys.max()) - y0 + 1, int(xs.max()) - x0 + 1), dtype=bool)
    crop[ys - y0, xs - x0] = True
    return InstanceMask(instance_id=instance_id, width=width, height=height, origin=(x0, y0), bits=crop)
