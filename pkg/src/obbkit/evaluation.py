"""Rotated-box detection evaluation: matching, PR curves, AP and mAP."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .annotations import AnnotationSet, ObjectAnnotation
from .geometry import boxes_to_array, pairwise_iou
from .nms import Detection, score_order

ALL_POINT = "all_point"
ELEVEN_POINT = "eleven_point"
AP_MODES = (ALL_POINT, ELEVEN_POINT)

TP, FP, IGNORED = 1, 0, -1


class ClassTableError(ValueError):
    """A detection or annotation names a class outside the class table."""


@dataclass
class MatchResult:
    """Outcome per detection, in processing (descending score) order.

    ``flags`` holds ``TP``, ``FP`` or ``IGNORED``; ``matched_gt`` the GT index
    for true positives and -1 otherwise.
    """

    order: np.ndarray
    scores: np.ndarray
    flags: np.ndarray
    matched_gt: np.ndarray
    gt_matched: np.ndarray
    num_positives: int  # non-ignored GTs, the recall denominator

    @property
    def tp_count(self) -> int:
        return int((self.flags == TP).sum())


def _match(ious: np.ndarray, order, gt_difficult, iou_thr, ignore_difficult):
    n, m = ious.shape
    flags = np.full(n, FP, dtype=np.int64)
    matched = np.full(n, -1, dtype=np.int64)
    taken = np.zeros(m, dtype=bool)
    for pos, d in enumerate(order):
        if m == 0:
            break
        row = np.where(taken, -1.0, ious[d])
        j = int(row.argmax())
        if row[j] < iou_thr:
            continue
        if ignore_difficult and gt_difficult[j]:
            flags[pos] = IGNORED
            continue
        flags[pos] = TP
        matched[pos] = j
        taken[j] = True
    return flags, matched, taken


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[ObjectAnnotation],
    iou_thr: float = 0.5,
    ignore_difficult: bool = True,
) -> MatchResult:
    """Greedy single-image matching; classes must agree for a match.

    Detections are visited by descending score (lower index first on ties)
    and each takes the not-yet-matched same-class GT of highest IoU, if that
    IoU reaches ``iou_thr``. A detection whose chosen GT is difficult is
    dropped from scoring when ``ignore_difficult`` is set.
    """
    if not 0 < iou_thr <= 1:
        raise ValueError(f"iou_thr must lie in (0, 1], got {iou_thr}")
    order = score_order([d.score for d in dets])
    ious = pairwise_iou(
        boxes_to_array([d.box for d in dets]), boxes_to_array([g.box for g in gts])
    )
    det_cls = np.array([d.class_id for d in dets], dtype=np.int64)
    gt_cls = np.array([g.class_id for g in gts], dtype=np.int64)
    ious = np.where(det_cls[:, None] == gt_cls[None, :], ious, -1.0)
    difficult = np.array([g.difficult for g in gts], dtype=bool)
    flags, matched, taken = _match(ious, order, difficult, iou_thr, ignore_difficult)
    npos = int((~difficult).sum()) if ignore_difficult else len(gts)
    return MatchResult(
        order,
        np.array([dets[i].score for i in order], dtype=np.float64),
        flags,
        matched,
        taken,
        npos,
    )


def pr_curve(match: MatchResult, gt_count: Optional[int] = None) -> List[Tuple[float, float]]:
    """Cumulative (recall, precision) after each scored detection."""
    n_gt = match.num_positives if gt_count is None else gt_count
    if n_gt < 0:
        raise ValueError("gt_count must be >= 0")
    scored = match.flags[match.flags != IGNORED]
    if scored.size == 0:
        return []
    tp = np.cumsum(scored == TP)
    fp = np.cumsum(scored == FP)
    prec = tp / (tp + fp)
    rec = tp / n_gt if n_gt > 0 else np.zeros_like(prec)
    return list(zip(rec.tolist(), prec.tolist()))


def average_precision(curve: Sequence[Tuple[float, float]], mode: str = ALL_POINT) -> float:
    if mode not in AP_MODES:
        raise ValueError(f"unknown AP mode {mode!r}")
    if len(curve) == 0:
        return 0.0
    rec = np.array([r for r, _ in curve], dtype=np.float64)
    prec = np.array([p for _, p in curve], dtype=np.float64)
    if mode == ELEVEN_POINT:
        ap = 0.0
        for i in range(11):
            sel = rec >= i / 10
            ap += prec[sel].max() if sel.any() else 0.0
        return float(ap / 11)
    mrec = np.concatenate(([0.0], rec, [1.0]))
    mpre = np.concatenate(([0.0], prec, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    i = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]))


@dataclass
class ClassReport:
    name: str
    ap: float
    gt_count: int
    det_count: int
    curve: List[Tuple[float, float]] = field(default_factory=list)
    no_gt: bool = False  # detections present but no GT: AP forced to 0


@dataclass
class EvalReport:
    classes: List[ClassReport]
    mAP: float
    iou_thr: float
    mode: str
    excluded: List[str]  # classes with no GT and no detections


def _det_sort_key(item):
    image_id, d = item
    return (-d.score, image_id, d.box.as_tuple())


def _evaluate_class(c, dets_by_image, gts_by_image, iou_thr, ignore_difficult):
    items = []
    for image_id, dets in dets_by_image.items():
        items.extend((image_id, d) for d in dets if d.class_id == c)
    items.sort(key=_det_sort_key)
    gts = {
        image_id: [g for g in ann.objects if g.class_id == c]
        for image_id, ann in gts_by_image.items()
    }
    npos = sum(
        sum(1 for g in gl if not (ignore_difficult and g.difficult))
        for gl in gts.values()
    )
    by_image: Dict[str, list] = {}
    for pos, (image_id, d) in enumerate(items):
        by_image.setdefault(image_id, []).append((pos, d))
    flags = np.full(len(items), FP, dtype=np.int64)
    for image_id, entries in by_image.items():
        g = gts.get(image_id, [])
        if not g:
            continue
        ious = pairwise_iou(
            boxes_to_array([d.box for _, d in entries]), boxes_to_array([x.box for x in g])
        )
        diff = np.array([x.difficult for x in g], dtype=bool)
        f, _, _ = _match(ious, np.arange(len(entries)), diff, iou_thr, ignore_difficult)
        for (pos, _), v in zip(entries, f):
            flags[pos] = v
    match = MatchResult(
        np.arange(len(items)),
        np.array([d.score for _, d in items]),
        flags,
        np.full(len(items), -1),
        np.zeros(0, dtype=bool),
        npos,
    )
    return match, npos, len(items)


def evaluate(
    dets_by_image: Mapping[str, Sequence[Detection]],
    gts_by_image: Mapping[str, AnnotationSet],
    class_names: Sequence[str],
    iou_thr: float = 0.5,
    mode: str = ALL_POINT,
    ignore_difficult: bool = True,
    threads: int = 1,
) -> EvalReport:
    """Pool detections per class over all images and compute AP per class.

    The mean runs over classes with at least one GT. Ties in score are broken
    by image id and box coordinates so input order never matters.
    """
    if mode not in AP_MODES:
        raise ValueError(f"unknown AP mode {mode!r}")
    if not 0 < iou_thr <= 1:
        raise ValueError(f"iou_thr must lie in (0, 1], got {iou_thr}")
    n_cls = len(class_names)
    for image_id, dets in dets_by_image.items():
        for d in dets:
            if not 0 <= d.class_id < n_cls:
                raise ClassTableError(
                    f"detection in {image_id!r} has class id {d.class_id} outside a "
                    f"{n_cls}-class table"
                )
    for image_id, ann in gts_by_image.items():
        for g in ann.objects:
            if not 0 <= g.class_id < n_cls:
                raise ClassTableError(
                    f"annotation in {image_id!r} has class id {g.class_id} outside a "
                    f"{n_cls}-class table"
                )

    def work(c):
        return _evaluate_class(c, dets_by_image, gts_by_image, iou_thr, ignore_difficult)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(work, range(n_cls)))
    else:
        results = [work(c) for c in range(n_cls)]

    reports, excluded, aps = [], [], []
    for c, (match, npos, ndet) in enumerate(results):
        name = class_names[c]
        if npos == 0:
            if ndet == 0:
                excluded.append(name)
                continue
            reports.append(ClassReport(name, 0.0, 0, ndet, [], no_gt=True))
            continue
        curve = pr_curve(match, npos)
        ap = average_precision(curve, mode)
        reports.append(ClassReport(name, ap, npos, ndet, curve))
        aps.append(ap)
    mAP = float(np.mean(aps)) if aps else 0.0
    return EvalReport(reports, mAP, iou_thr, mode, excluded)
