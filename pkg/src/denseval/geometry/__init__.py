"""Pixel-lattice geometry: contours, simplification, rasterization, IoU, RLE and NMS."""

from .contours import collapse_collinear, trace_external_contour
from .nms import nms
from .raster import (
    denormalize_polygon,
    intersection_area,
    iou_matrix,
    mask_iou,
    normalize_polygon,
    polygon_area,
    rasterize_polygon,
    rle_decode,
    rle_encode,
    to_mask,
)
from .simplify import douglas_peucker_open, farthest_pair, point_segment_distance, simplify_polygon

__all__ = [
    "collapse_collinear",
    "trace_external_contour",
    "nms",
    "denormalize_polygon",
    "intersection_area",
    "iou_matrix",
    "mask_iou",
    "normalize_polygon",
    "polygon_area",
    "rasterize_polygon",
    "rle_decode",
    "rle_encode",
    "to_mask",
    "douglas_peucker_open",
    "farthest_pair",
    "point_segment_distance",
    "simplify_polygon",
]
