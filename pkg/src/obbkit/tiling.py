"""Patch planning for large images, annotation clipping and detection merging.

``gap`` is the overlap between neighbouring patches, so windows start every
``patch - gap`` pixels; the last window on an axis is pulled back to end at
the image border. Images smaller than a patch get a single window at 0 that
the pixel extractor pads.
"""
from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

from .annotations import AnnotationSet
from .geometry import (
    RotatedBox,
    clip_convex,
    min_area_rect,
    obb_to_quad,
    polygon_area,
)
from .nms import CLASS_AWARE, Detection, rotated_nms

DEFAULT_PATCH = 800
DEFAULT_GAP = 150
DEFAULT_KEEP_VISIBILITY = 0.7


@dataclass(frozen=True)
class TilePlan:
    image_w: int
    image_h: int
    patch: int
    gap: int
    x_origins: Tuple[int, ...]
    y_origins: Tuple[int, ...]

    @property
    def origins(self) -> List[Tuple[int, int]]:
        """All window corners, row by row."""
        return [(x, y) for y in self.y_origins for x in self.x_origins]

    def window(self, origin: Tuple[int, int]) -> Tuple[int, int, int, int]:
        x0, y0 = origin
        return (x0, y0, x0 + self.patch, y0 + self.patch)


@dataclass(frozen=True)
class TileObject:
    box: RotatedBox  # tile frame
    class_id: int
    visibility: float
    truncated: bool
    difficult: bool = False
    source_index: int = -1


@dataclass(frozen=True)
class TileAnnotation:
    origin: Tuple[int, int]
    objects: Tuple[TileObject, ...]


def axis_origins(dim: int, patch: int, gap: int) -> List[int]:
    stride = patch - gap
    out = [0]
    x = 0
    while x + patch < dim:
        x += stride
        if x + patch > dim:
            x = max(dim - patch, 0)
        out.append(x)
    return sorted(set(out))


def plan_tiles(
    image_w: int, image_h: int, patch: int = DEFAULT_PATCH, gap: int = DEFAULT_GAP
) -> TilePlan:
    if patch <= gap or gap < 0:
        raise ValueError(f"need patch > gap >= 0, got patch={patch}, gap={gap}")
    if image_w < 1 or image_h < 1:
        raise ValueError(f"image dimensions must be >= 1, got {image_w}x{image_h}")
    return TilePlan(
        int(image_w),
        int(image_h),
        int(patch),
        int(gap),
        tuple(axis_origins(int(image_w), patch, gap)),
        tuple(axis_origins(int(image_h), patch, gap)),
    )


def _clip_to_window(box: RotatedBox, window) -> Tuple[float, list]:
    x0, y0, x1, y1 = window
    quad = list(obb_to_quad(box).points)
    rect = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    clipped = clip_convex(quad, rect)
    full = polygon_area(quad)
    return (polygon_area(clipped) / full if len(clipped) >= 3 else 0.0), clipped


def clip_tile(
    gts: AnnotationSet,
    plan: TilePlan,
    origin: Tuple[int, int],
    keep_visibility: float = DEFAULT_KEEP_VISIBILITY,
) -> TileAnnotation:
    x0, y0 = origin
    window = plan.window(origin)
    objs = []
    for idx, o in enumerate(gts.objects):
        vis, poly = _clip_to_window(o.box, window)
        if vis <= 0 or vis < keep_visibility:
            continue
        if vis >= 1.0:
            vis = 1.0
            box = o.box
        else:
            box = min_area_rect(poly)
        objs.append(
            TileObject(
                box.translate(-x0, -y0),
                o.class_id,
                vis,
                vis < 1.0,
                o.difficult,
                idx,
            )
        )
    return TileAnnotation(origin, tuple(objs))


def clip_annotations(
    gts: AnnotationSet,
    plan: TilePlan,
    keep_visibility: float = DEFAULT_KEEP_VISIBILITY,
    threads: int = 1,
) -> List[TileAnnotation]:
    """Per-tile annotations in ``plan.origins`` order.

    Objects are kept in a tile when the fraction of their area inside the
    window is at least ``keep_visibility``; cut objects are refit to the
    minimum-area rectangle of the clipped polygon and flagged truncated.
    """
    if not 0 < keep_visibility <= 1:
        raise ValueError(f"keep_visibility must lie in (0, 1], got {keep_visibility}")

    def work(origin):
        return clip_tile(gts, plan, origin, keep_visibility)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(work, plan.origins))
    return [work(o) for o in plan.origins]


def merge_detections(
    per_tile: Sequence[Tuple[Tuple[float, float], Sequence[Detection]]],
    iou_thr: float,
    mode: str = CLASS_AWARE,
) -> List[Detection]:
    """Shift tile detections to the image frame and run NMS over the union."""
    dets = [
        Detection(d.box.translate(ox, oy), d.class_id, d.score)
        for (ox, oy), tile_dets in per_tile
        for d in tile_dets
    ]
    return [dets[i] for i in rotated_nms(dets, iou_thr, mode)]


_TILE_RE = re.compile(r"^(?P<image>.+)__(?P<x>\d+)__(?P<y>\d+)$")


def tile_name(image_id: str, origin: Tuple[int, int]) -> str:
    return f"{image_id}__{origin[0]}__{origin[1]}"


def parse_tile_name(name: str) -> Tuple[str, Tuple[int, int]]:
    m = _TILE_RE.match(name)
    if m is None:
        raise ValueError(f"not a tile name: {name!r}")
    return m["image"], (int(m["x"]), int(m["y"]))


# Called with (image_id, window) for each planned tile; pixel I/O lives with
# the caller, which pads windows that run past the image border.
SliceHook = Callable[[str, Tuple[int, int, int, int]], None]


def run_slice_hook(image_id: str, plan: TilePlan, hook: Optional[SliceHook]) -> None:
    if hook is None:
        return
    for origin in plan.origins:
        hook(image_id, plan.window(origin))
