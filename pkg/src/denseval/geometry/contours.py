"""
External contour tracing.

Moore-neighbour boundary following with 8-connectivity and Jacob's stopping
criterion, followed by collapse of straight runs so that only direction
changes remain as vertices.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..domain.errors import GeometryError
from ..domain.masks import Contour, InstanceMask, PixelPoint

logger = logging.getLogger(__name__)

# Clockwise on screen (y grows downward), starting west.
_DIRECTIONS: Tuple[PixelPoint, ...] = (
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
)
_DIRECTION_INDEX: Dict[PixelPoint, int] = {d: i for i, d in enumerate(_DIRECTIONS)}


def _moore_trace(bits: np.ndarray) -> List[PixelPoint]:
    """Trace the outer boundary of the component containing the first raster pixel.

    `bits` must be padded by one background pixel on every side. Returned
    coordinates are in the padded frame.
    """
    rows, cols = np.nonzero(bits)
    start = (int(cols[0]), int(rows[0]))
    points: List[PixelPoint] = [start]
    current = start
    # The pixel west of the first raster hit is background by construction.
    back = 0
    first_step = None
    max_steps = 4 * int(bits.sum()) + 8

    for _ in range(max_steps):
        nxt = None
        for k in range(1, 9):
            idx = (back + k) % 8
            dx, dy = _DIRECTIONS[idx]
            cand = (current[0] + dx, current[1] + dy)
            if bits[cand[1], cand[0]]:
                prev = _DIRECTIONS[(back + k - 1) % 8]
                prev_pixel = (current[0] + prev[0], current[1] + prev[1])
                nxt = cand
                back = _DIRECTION_INDEX[(prev_pixel[0] - cand[0], prev_pixel[1] - cand[1])]
                break
        if nxt is None:
            # isolated pixel
            return points
        if first_step is None:
            first_step = nxt
        elif current == start and nxt == first_step:
            break
        points.append(nxt)
        current = nxt
    else:
        logger.warning("Contour trace hit its step bound (%d); result may be truncated", max_steps)

    if len(points) > 1 and points[-1] == points[0]:
        points.pop()
    return points


def collapse_collinear(points: Sequence[PixelPoint]) -> List[PixelPoint]:
    """Drop vertices inside straight runs of a closed chain.

    A vertex is kept only when the incoming and outgoing steps point in
    different directions; reversals (one-pixel spurs) are kept.
    """
    n = len(points)
    if n < 3:
        return list(points)
    kept: List[PixelPoint] = []
    for i in range(n):
        px, py = points[i - 1]
        cx, cy = points[i]
        nx, ny = points[(i + 1) % n]
        ax, ay = cx - px, cy - py
        bx, by = nx - cx, ny - cy
        cross = ax * by - ay * bx
        dot = ax * bx + ay * by
        if cross == 0 and dot > 0:
            continue
        kept.append((cx, cy))
    if not kept:
        # a closed chain cannot be straight everywhere; keep the input
        return list(points)
    return kept


def trace_external_contour(mask: InstanceMask) -> Contour:
    """Outer boundary of `mask` in lattice pixel coordinates; holes are ignored."""
    if mask.is_empty:
        raise GeometryError(f"cannot trace an empty mask (instance {mask.instance_id})")
    padded = np.pad(mask.bits, 1, mode="constant", constant_values=False)
    raw = _moore_trace(padded)
    ox, oy = mask.origin
    shifted = [(x - 1 + ox, y - 1 + oy) for x, y in raw]
    contour = Contour(vertices=tuple(collapse_collinear(shifted)))
    if contour.degenerate:
        logger.debug("Instance %d traced to a degenerate contour (%d vertices)", mask.instance_id, len(contour.vertices))
    return contour
