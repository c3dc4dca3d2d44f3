"""Confidence filtering and greedy rotated NMS."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .geometry import RotatedBox, boxes_to_array, envelopes_array, paired_iou

CLASS_AWARE = "class_aware"
CLASS_AGNOSTIC = "class_agnostic"
MODES = (CLASS_AWARE, CLASS_AGNOSTIC)


@dataclass(frozen=True)
class Detection:
    box: RotatedBox
    class_id: int
    score: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if self.class_id < 0:
            raise ValueError(f"negative class id {self.class_id}")


def score_filter(dets: Sequence[Detection], conf_thr: float) -> List[Detection]:
    if not 0.0 <= conf_thr <= 1.0:
        raise ValueError(f"conf_thr must lie in [0, 1], got {conf_thr}")
    return [d for d in dets if d.score >= conf_thr]


def score_order(scores: Sequence[float]) -> np.ndarray:
    """Indices by descending score, lower index first on ties."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.size), -scores))


def _greedy(boxes: np.ndarray, order: np.ndarray, iou_thr: float) -> List[int]:
    env = envelopes_array(boxes)
    alive = np.ones(boxes.shape[0], dtype=bool)
    keep = []
    for pos, i in enumerate(order):
        if not alive[i]:
            continue
        keep.append(int(i))
        rest = order[pos + 1 :]
        rest = rest[alive[rest]]
        if rest.size == 0:
            continue
        e = env[i]
        # envelope prefilter: disjoint envelopes imply zero IoU
        near = rest[
            (env[rest, 0] <= e[2])
            & (e[0] <= env[rest, 2])
            & (env[rest, 1] <= e[3])
            & (e[1] <= env[rest, 3])
        ]
        if near.size == 0:
            continue
        ious = paired_iou(np.repeat(boxes[i : i + 1], near.size, axis=0), boxes[near])
        alive[near[ious > iou_thr]] = False
    return keep


def rotated_nms(
    dets: Sequence[Detection], iou_thr: float, mode: str = CLASS_AWARE
) -> List[int]:
    """Greedy NMS; returns kept indices into ``dets`` by descending score.

    A detection is suppressed when its IoU with a kept one is strictly
    greater than ``iou_thr``, so ``iou_thr=1`` keeps everything.
    """
    if not 0.0 <= iou_thr <= 1.0:
        raise ValueError(f"iou_thr must lie in [0, 1], got {iou_thr}")
    if mode not in MODES:
        raise ValueError(f"unknown NMS mode {mode!r}")
    if not dets:
        return []
    boxes = boxes_to_array([d.box for d in dets])
    scores = np.array([d.score for d in dets])
    order = score_order(scores)
    if mode == CLASS_AGNOSTIC:
        return _greedy(boxes, order, iou_thr)
    classes = np.array([d.class_id for d in dets])
    kept: List[int] = []
    for c in np.unique(classes):
        sub = order[classes[order] == c]
        kept.extend(_greedy(boxes, sub, iou_thr))
    kept_arr = np.array(kept, dtype=np.int64)
    merged = kept_arr[np.lexsort((kept_arr, -scores[kept_arr]))]
    return [int(i) for i in merged]
