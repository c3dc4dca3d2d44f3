"""Rotated box delta coding and the two-stage refinement cascade.

Center offsets are expressed in the anchor's own rotated frame, so the
encoding is invariant to a rigid motion applied to anchor and target alike.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence

from .geometry import RotatedBox, normalize, normalize_angle

MAX_LOG_RATIO = 4.0


@dataclass(frozen=True)
class BoxDelta:
    dx: float
    dy: float
    dw: float
    dh: float
    dtheta: float

    def __post_init__(self) -> None:
        vals = (self.dx, self.dy, self.dw, self.dh, self.dtheta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite delta {vals}")
        object.__setattr__(self, "dtheta", normalize_angle(self.dtheta))

    def as_tuple(self):
        return (self.dx, self.dy, self.dw, self.dh, self.dtheta)

    def scaled(self, f: float) -> "BoxDelta":
        return BoxDelta(*(f * v for v in self.as_tuple()))


ZERO_DELTA = BoxDelta(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class StageThresholds:
    pos_iou_threshold: float
    neg_iou_threshold: float

    def __post_init__(self) -> None:
        if not 0 < self.neg_iou_threshold <= self.pos_iou_threshold <= 1:
            raise ValueError(
                "stage thresholds need 0 < neg <= pos <= 1, got "
                f"pos={self.pos_iou_threshold}, neg={self.neg_iou_threshold}"
            )


@dataclass(frozen=True)
class CascadeConfig:
    """Per-stage assignment thresholds, refinement stage first.

    The default is the 0.5 / 0.6 positive-threshold pair with negatives
    below 0.4 at both stages.
    """

    stages: tuple = (StageThresholds(0.5, 0.4), StageThresholds(0.6, 0.4))

    def __post_init__(self) -> None:
        if len(self.stages) < 1:
            raise ValueError("cascade needs at least one stage")
        object.__setattr__(
            self,
            "stages",
            tuple(
                s if isinstance(s, StageThresholds) else StageThresholds(*s)
                for s in self.stages
            ),
        )


class Decoded(NamedTuple):
    box: RotatedBox
    clamped: bool


class CascadeResult(NamedTuple):
    final: List[RotatedBox]
    stages: List[List[RotatedBox]]  # stages[0] are the input anchors
    clamped: List[List[bool]]


def encode_delta(anchor: RotatedBox, target: RotatedBox) -> BoxDelta:
    c, s = math.cos(anchor.theta), math.sin(anchor.theta)
    ddx, ddy = target.cx - anchor.cx, target.cy - anchor.cy
    return BoxDelta(
        (ddx * c + ddy * s) / anchor.w,
        (-ddx * s + ddy * c) / anchor.h,
        math.log(target.w / anchor.w),
        math.log(target.h / anchor.h),
        target.theta - anchor.theta,
    )


def decode_delta(
    anchor: RotatedBox, delta: BoxDelta, max_log_ratio: float = MAX_LOG_RATIO
) -> Decoded:
    """Apply ``delta`` to ``anchor``; size log-ratios are clamped to +-max_log_ratio."""
    dw = min(max(delta.dw, -max_log_ratio), max_log_ratio)
    dh = min(max(delta.dh, -max_log_ratio), max_log_ratio)
    clamped = dw != delta.dw or dh != delta.dh
    c, s = math.cos(anchor.theta), math.sin(anchor.theta)
    ox, oy = delta.dx * anchor.w, delta.dy * anchor.h
    box = normalize(
        anchor.cx + ox * c - oy * s,
        anchor.cy + ox * s + oy * c,
        anchor.w * math.exp(dw),
        anchor.h * math.exp(dh),
        anchor.theta + delta.dtheta,
    )
    return Decoded(box, clamped)


def cascade_refine(
    anchors: Sequence[RotatedBox], stage_deltas: Sequence[Sequence[BoxDelta]]
) -> CascadeResult:
    """Decode each stage's deltas on top of the previous stage's boxes."""
    boxes = list(anchors)
    stages = [boxes]
    flags = []
    for k, deltas in enumerate(stage_deltas):
        if len(deltas) != len(boxes):
            raise ValueError(
                f"stage {k}: {len(deltas)} deltas for {len(boxes)} boxes"
            )
        decoded = [decode_delta(b, d) for b, d in zip(boxes, deltas)]
        boxes = [d.box for d in decoded]
        stages.append(boxes)
        flags.append([d.clamped for d in decoded])
    return CascadeResult(boxes, stages, flags)
