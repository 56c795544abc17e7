"""
Mask-level non-maximum suppression.
"""

from __future__ import annotations

import logging
from typing import List

from ..domain.errors import GeometryError
from ..domain.masks import InstanceMask, PredictionSet
from .raster import mask_iou, to_mask

logger = logging.getLogger(__name__)


def nms(preds: PredictionSet, tau_nms: float) -> PredictionSet:
    """Greedy suppression in descending confidence (ties: earlier item first).

    No kept pair has IoU > tau_nms. Kept items stay in their input order.
    """
    if not (0.0 < tau_nms <= 1.0):
        raise GeometryError(f"NMS threshold must be in (0,1], got {tau_nms}")
    masks: List[InstanceMask] = [
        to_mask(item.geometry, preds.width, preds.height, instance_id=item.source_index) for item in preds.items
    ]
    order = sorted(range(len(preds.items)), key=lambda i: (-preds.items[i].confidence, i))
    kept: List[int] = []
    for i in order:
        if masks[i].is_empty:
            kept.append(i)
            continue
        if all(masks[k].is_empty or mask_iou(masks[i], masks[k]) <= tau_nms for k in kept):
            kept.append(i)
    suppressed = len(preds.items) - len(kept)
    if suppressed:
        logger.debug("NMS on %s suppressed %d of %d predictions", preds.image_id, suppressed, len(preds.items))
    kept_items = tuple(preds.items[i] for i in sorted(kept))
    return PredictionSet(preds.image_id, preds.width, preds.height, kept_items)
