"""Dense anchors and max-IoU training-sample assignment."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import RotatedBox, boxes_to_array, normalize, pairwise_iou

NEGATIVE = -1
IGNORE = -2


@dataclass(frozen=True)
class AnchorGrid:
    stride: float
    base_size: float
    grid_w: int
    grid_h: int
    base_theta: float = 0.0

    def __post_init__(self) -> None:
        if self.stride <= 0 or self.base_size <= 0:
            raise ValueError("stride and base_size must be positive")
        if self.grid_w < 1 or self.grid_h < 1:
            raise ValueError("grid dimensions must be >= 1")


def generate_anchors(grid: AnchorGrid) -> list[RotatedBox]:
    """One square anchor per cell, row-major (x varies fastest)."""
    return [
        normalize(
            (i + 0.5) * grid.stride,
            (j + 0.5) * grid.stride,
            grid.base_size,
            grid.base_size,
            grid.base_theta,
        )
        for j in range(grid.grid_h)
        for i in range(grid.grid_w)
    ]


@dataclass
class AssignmentResult:
    """Per-anchor labels: a GT index (positive), ``NEGATIVE`` or ``IGNORE``.

    ``assigned_iou`` is the IoU between each anchor and the GT it is labelled
    with (its max IoU for non-positive anchors). ``gt_best_anchor`` is -1 for
    GTs no anchor overlaps.
    """

    labels: np.ndarray
    max_iou: np.ndarray
    assigned_iou: np.ndarray
    gt_best_anchor: np.ndarray
    num_gts: int

    @property
    def positive_mask(self) -> np.ndarray:
        return self.labels >= 0

    @property
    def num_anchors(self) -> int:
        return int(self.labels.shape[0])


def max_iou_assign(
    anchors: Sequence[RotatedBox] | np.ndarray,
    gts: Sequence[RotatedBox] | np.ndarray,
    pos_thr: float,
    neg_thr: float,
    low_quality_match: bool = True,
) -> AssignmentResult:
    if not 0 < neg_thr <= pos_thr <= 1:
        raise ValueError(f"need 0 < neg_thr <= pos_thr <= 1, got {neg_thr}, {pos_thr}")
    a = anchors if isinstance(anchors, np.ndarray) else boxes_to_array(anchors)
    g = gts if isinstance(gts, np.ndarray) else boxes_to_array(gts)
    n, m = a.shape[0], g.shape[0]
    if m == 0:
        return AssignmentResult(
            labels=np.full(n, NEGATIVE, dtype=np.int64),
            max_iou=np.zeros(n),
            assigned_iou=np.zeros(n),
            gt_best_anchor=np.zeros(0, dtype=np.int64),
            num_gts=0,
        )
    ious = pairwise_iou(a, g)
    # argmax returns the first maximum: ties go to the lowest GT index
    argmax = ious.argmax(axis=1) if n else np.zeros(0, dtype=np.int64)
    max_iou = ious.max(axis=1) if n else np.zeros(0)
    labels = np.full(n, IGNORE, dtype=np.int64)
    labels[max_iou < neg_thr] = NEGATIVE
    pos = max_iou >= pos_thr
    labels[pos] = argmax[pos]

    gt_best = np.full(m, -1, dtype=np.int64)
    if n:
        best = ious.argmax(axis=0)
        has = ious[best, np.arange(m)] > 0
        gt_best[has] = best[has]

    if low_quality_match and n:
        # Each overlapped GT claims a distinct anchor, strongest GTs first,
        # so that GTs sharing a best anchor still all end up positive.
        gt_max = ious.max(axis=0)
        order = sorted(range(m), key=lambda j: (-gt_max[j], j))
        taken = set()
        for j in order:
            if gt_max[j] <= 0:
                continue
            col = ious[:, j]
            cand = np.flatnonzero(col > 0)
            cand = cand[np.lexsort((cand, -col[cand]))]
            for k in cand:
                if int(k) not in taken:
                    taken.add(int(k))
                    labels[k] = j
                    break

    assigned = max_iou.copy()
    pos_idx = np.flatnonzero(labels >= 0)
    assigned[pos_idx] = ious[pos_idx, labels[pos_idx]]
    return AssignmentResult(labels, max_iou, assigned, gt_best, m)


def assignment_stats(result: AssignmentResult, gts=None) -> dict:
    """Counts, fraction of GTs with at least one positive anchor, and mean positive IoU."""
    m = result.num_gts if gts is None else len(gts)
    if m != result.num_gts:
        raise ValueError("result was produced from a different GT list")
    labels = result.labels
    pos = labels >= 0
    covered = np.unique(labels[pos]).size
    return {
        "positives": int(pos.sum()),
        "negatives": int((labels == NEGATIVE).sum()),
        "ignored": int((labels == IGNORE).sum()),
        "gt_recall": covered / m if m else 0.0,
        "mean_pos_iou": float(result.assigned_iou[pos].mean()) if pos.any() else 0.0,
    }
