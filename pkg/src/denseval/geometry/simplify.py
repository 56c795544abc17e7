"""
Douglas-Peucker simplification of closed contours.

The closed chain is split at its two mutually farthest vertices; each half is
simplified as an open polyline with tolerance eps = alpha * perimeter and the
halves are rejoined.
"""

from __future__ import annotations

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np

from ..domain.masks import Contour, PixelPoint, SimplificationParams

logger = logging.getLogger(__name__)

_PAIRWISE_CHUNK = 1024


def point_segment_distance(p: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    seg_len2 = dx * dx + dy * dy
    if seg_len2 == 0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / seg_len2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def farthest_pair(points: Sequence[PixelPoint]) -> Tuple[int, int]:
    """Indices (i < j) of the two vertices at maximal mutual distance; first pair wins ties."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    best = -1.0
    best_pair = (0, min(1, n - 1))
    for start in range(0, n, _PAIRWISE_CHUNK):
        block = pts[start : start + _PAIRWISE_CHUNK]
        d2 = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        # only j > i so the first occurrence is the lexicographically smallest pair
        rows = np.arange(start, start + len(block))[:, None]
        d2[np.arange(n)[None, :] <= rows] = -1.0
        flat = int(np.argmax(d2))
        value = float(d2.flat[flat])
        if value > best:
            best = value
            i, j = divmod(flat, n)
            best_pair = (start + i, j)
    return best_pair


def douglas_peucker_open(points: Sequence[PixelPoint], tolerance: float) -> List[PixelPoint]:
    """Iterative Douglas-Peucker on an open polyline; endpoints are always kept."""
    n = len(points)
    if n <= 2:
        return list(points)
    keep = [False] * n
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        anchor, floater = stack.pop()
        max_distance = -1.0
        farthest = anchor
        for i in range(anchor + 1, floater):
            distance = point_segment_distance(points[i], points[anchor], points[floater])
            if distance > max_distance:
                max_distance = distance
                farthest = i
        if farthest != anchor and max_distance > tolerance:
            keep[farthest] = True
            stack.append((anchor, farthest))
            stack.append((farthest, floater))
    return [p for p, k in zip(points, keep) if k]


def simplify_polygon(contour: Contour, params: SimplificationParams) -> Contour:
    """Simplify a closed contour; falls back to the input when fewer than 3 vertices survive."""
    if contour.degenerate:
        return contour
    tolerance = params.tolerance(contour)
    if tolerance == 0:
        return contour

    vertices = list(contour.vertices)
    i, j = farthest_pair(vertices)
    first_half = vertices[i : j + 1]
    second_half = vertices[j:] + vertices[: i + 1]
    left = douglas_peucker_open(first_half, tolerance)
    right = douglas_peucker_open(second_half, tolerance)
    simplified = left[:-1] + right[:-1]

    if len(simplified) < 3:
        logger.debug(
            "Simplification left %d vertices (eps=%.4f); keeping the collapsed contour",
            len(simplified),
            tolerance,
        )
        return Contour(vertices=contour.vertices, fallback=True)
    return Contour(vertices=tuple(simplified))
