"""Geometry, assignment, NMS, tiling, augmentation and evaluation tools for
oriented (rotated) bounding-box detection."""

__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    AxisBox,
    InvalidGeometryError,
    Quad,
    RotatedBox,
    convex_intersection_area,
    hbb_envelope,
    normalize,
    obb_to_quad,
    pairwise_iou,
    quad_to_obb,
    rotated_iou,
)
from .nms import Detection, rotated_nms, score_filter  # noqa: E402

__all__ = [
    "AxisBox",
    "Detection",
    "InvalidGeometryError",
    "Quad",
    "RotatedBox",
    "convex_intersection_area",
    "hbb_envelope",
    "normalize",
    "obb_to_quad",
    "pairwise_iou",
    "quad_to_obb",
    "rotated_iou",
    "rotated_nms",
    "score_filter",
]
