"""Box-preserving geometric augmentation and class-balanced repeat factors."""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .annotations import AnnotationSet, ObjectAnnotation
from .geometry import RotatedBox, min_area_rect, normalize, obb_to_quad

logger = logging.getLogger(__name__)

HORIZONTAL = "horizontal"
VERTICAL = "vertical"


def flip_obb(ann: AnnotationSet, axis: str = HORIZONTAL) -> AnnotationSet:
    if axis not in (HORIZONTAL, VERTICAL):
        raise ValueError(f"unknown flip axis {axis!r}")
    objs = []
    for o in ann.objects:
        b = o.box
        if axis == HORIZONTAL:
            nb = normalize(ann.image_w - b.cx, b.cy, b.w, b.h, -b.theta)
        else:
            nb = normalize(b.cx, ann.image_h - b.cy, b.w, b.h, -b.theta)
        objs.append(ObjectAnnotation(nb, o.class_id, o.difficult))
    return ann.with_objects(objs)


def apply_affine(M: np.ndarray, points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    return pts @ M[:, :2].T + M[:, 2]


def affine_obb(
    ann: AnnotationSet, M, out_w: Optional[float] = None, out_h: Optional[float] = None
) -> AnnotationSet:
    """Map every box through the 2x3 affine ``M`` and refit a rectangle.

    Shear turns rectangles into parallelograms, so each mapped corner set
    is replaced by its minimum-area enclosing rectangle. Boxes whose new
    center leaves ``[0, out_w) x [0, out_h)`` are dropped.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.shape != (2, 3):
        raise ValueError(f"affine matrix must be 2x3, got {M.shape}")
    if abs(np.linalg.det(M[:, :2])) <= 1e-12:
        raise ValueError("affine matrix is singular")
    out_w = ann.image_w if out_w is None else out_w
    out_h = ann.image_h if out_h is None else out_h
    objs = []
    for o in ann.objects:
        pts = apply_affine(M, obb_to_quad(o.box).points)
        nb = min_area_rect([tuple(p) for p in pts])
        if 0 <= nb.cx < out_w and 0 <= nb.cy < out_h:
            objs.append(ObjectAnnotation(nb, o.class_id, o.difficult))
    return ann.with_objects(objs, image_w=out_w, image_h=out_h)


def rotation_matrix(phi: float, center=(0.0, 0.0)) -> np.ndarray:
    """Rotation by ``phi`` (counter-clockwise in y-up terms) about ``center``."""
    c, s = math.cos(phi), math.sin(phi)
    cx, cy = center
    return np.array([[c, -s, cx - c * cx + s * cy], [s, c, cy - s * cx - c * cy]])


def multiscale_plan(scales: Sequence[float]) -> List[np.ndarray]:
    out = []
    for s in scales:
        if not s > 0:
            raise ValueError(f"scales must be positive, got {s}")
        out.append(np.array([[s, 0.0, 0.0], [0.0, s, 0.0]]))
    return out


def compose_affine(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """The affine map applying ``first`` then ``second``."""
    A = np.vstack([first, [0.0, 0.0, 1.0]])
    B = np.vstack([second, [0.0, 0.0, 1.0]])
    return (B @ A)[:2]


@dataclass
class BalancePlan:
    repeat_factors: Dict[str, int]
    class_repeat: Dict[int, int]
    counts_before: Dict[int, int]
    counts_after: Dict[int, int]
    target_ratio: float
    excluded_classes: List[int]
    fallback: bool = False

    @staticmethod
    def _ratio(counts: Dict[int, int]) -> float:
        vals = [v for v in counts.values() if v > 0]
        return min(vals) / max(vals) if vals else 1.0

    @property
    def ratio_before(self) -> float:
        return self._ratio(self.counts_before)

    @property
    def ratio_after(self) -> float:
        return self._ratio(self.counts_after)

    @property
    def inflation(self) -> float:
        """Images after resampling divided by images before."""
        n = len(self.repeat_factors)
        return sum(self.repeat_factors.values()) / n if n else 1.0


def _class_counts(ann: AnnotationSet) -> Counter:
    return Counter(o.class_id for o in ann.objects)


def balance_plan(
    sets: Sequence[AnnotationSet],
    target_ratio: float = 1.0,
    classes: Optional[Sequence[int]] = None,
) -> BalancePlan:
    """Image-level repeat factors for a long-tailed dataset.

    With ``t = target_ratio / C`` over the ``C`` classes present, a class of
    frequency ``f`` gets ``max(1, ceil(sqrt(t / f)))`` and each image takes
    the largest factor among its classes. If mixed images would leave the
    rarest/commonest ratio worse than before, the plan falls back to no
    resampling (``fallback=True``).
    """
    if not sets:
        raise ValueError("balance_plan needs at least one annotation set")
    if not 0 < target_ratio <= 1:
        raise ValueError(f"target_ratio must lie in (0, 1], got {target_ratio}")
    per_image = [_class_counts(s) for s in sets]
    totals: Counter = Counter()
    for c in per_image:
        totals.update(c)
    total = sum(totals.values())
    if total == 0:
        raise ValueError("dataset has no object instances")
    excluded = []
    if classes is not None:
        excluded = sorted(c for c in classes if totals.get(c, 0) == 0)
        if excluded:
            logger.warning("classes without instances excluded: %s", excluded)
    present = sorted(totals)
    t = target_ratio / len(present)
    class_repeat = {
        c: max(1, math.ceil(math.sqrt(t / (totals[c] / total)))) for c in present
    }
    factors = {}
    for s, counts in zip(sets, per_image):
        if s.image_id in factors:
            raise ValueError(f"duplicate image id {s.image_id!r}")
        factors[s.image_id] = max((class_repeat[c] for c in counts), default=1)
    before = {c: totals[c] for c in present}

    def recount(fac):
        after = {c: 0 for c in present}
        for s, counts in zip(sets, per_image):
            for c, n in counts.items():
                after[c] += fac[s.image_id] * n
        return after

    after = recount(factors)
    plan = BalancePlan(factors, class_repeat, before, after, target_ratio, excluded)
    if plan.ratio_after < plan.ratio_before:
        logger.warning("resampling would worsen class balance; keeping factors at 1")
        ones = {k: 1 for k in factors}
        plan = BalancePlan(
            ones, {c: 1 for c in present}, before, recount(ones), target_ratio,
            excluded, fallback=True,
        )
    return plan
