"""Reference implementations used only by the tests.

None of these share code paths with the clipping kernel: areas come from
counting pixel centers, rectangles from an angle sweep, NMS from the plain
quadratic definition.
"""
from __future__ import annotations

import math

import numpy as np

from obbkit.geometry import RotatedBox, normalize, rotated_iou


def _interval(c, s, w, h, dy):
    """x-offset interval (relative to the box center) of a box on scanline ``dy``.

    Arrays broadcast; empty intervals come back with lo > hi.
    """
    big = 1e300
    lo = np.full(np.broadcast(c, dy).shape, -big)
    hi = np.full_like(lo, big)
    # |X c + dy s| <= w/2
    a1 = (-w / 2 - dy * s)
    b1 = (w / 2 - dy * s)
    nz = c != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        l1 = np.where(c > 0, a1 / c, b1 / c)
        h1 = np.where(c > 0, b1 / c, a1 / c)
    ok1 = (a1 <= 0) & (b1 >= 0)
    lo = np.where(nz, np.maximum(lo, l1), np.where(ok1, lo, big))
    hi = np.where(nz, np.minimum(hi, h1), np.where(ok1, hi, -big))
    # |-X s + dy c| <= h/2
    a2 = (dy * c - h / 2)
    b2 = (dy * c + h / 2)
    nz = s != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        l2 = np.where(s > 0, a2 / s, b2 / s)
        h2 = np.where(s > 0, b2 / s, a2 / s)
    ok2 = (a2 <= 0) & (b2 >= 0)
    lo = np.where(nz, np.maximum(lo, l2), np.where(ok2, lo, big))
    hi = np.where(nz, np.minimum(hi, h2), np.where(ok2, hi, -big))
    return lo, hi


def _count(lo, hi, x0, dx, n):
    jlo = np.ceil((lo - x0) / dx - 0.5)
    jhi = np.floor((hi - x0) / dx - 0.5)
    jlo = np.clip(jlo, 0, n)
    jhi = np.clip(jhi, -1, n - 1)
    return np.maximum(jhi - jlo + 1, 0)


def _envelope(b):
    c, s = np.abs(np.cos(b[:, 4])), np.abs(np.sin(b[:, 4]))
    ex = b[:, 2] / 2 * c + b[:, 3] / 2 * s
    ey = b[:, 2] / 2 * s + b[:, 3] / 2 * c
    return b[:, 0] - ex, b[:, 1] - ey, b[:, 0] + ex, b[:, 1] + ey


def raster_iou(a: np.ndarray, b: np.ndarray, n: int = 2048, chunk: int = 128):
    """IoU of box pairs by counting centers of an n x n pixel grid over the joint envelope.

    Equivalent to testing every pixel center for membership in each box, but
    evaluated one scanline at a time.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 5)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 5)
    out = np.empty(a.shape[0])
    for start in range(0, a.shape[0], chunk):
        A, B = a[start : start + chunk], b[start : start + chunk]
        ax0, ay0, ax1, ay1 = _envelope(A)
        bx0, by0, bx1, by1 = _envelope(B)
        x0, y0 = np.minimum(ax0, bx0), np.minimum(ay0, by0)
        x1, y1 = np.maximum(ax1, bx1), np.maximum(ay1, by1)
        dx, dy = (x1 - x0) / n, (y1 - y0) / n
        ys = y0[:, None] + (np.arange(n)[None, :] + 0.5) * dy[:, None]
        counts = []
        intervals = []
        for box in (A, B):
            lo, hi = _interval(
                np.cos(box[:, 4:5]), np.sin(box[:, 4:5]), box[:, 2:3], box[:, 3:4],
                ys - box[:, 1:2],
            )
            lo, hi = lo + box[:, 0:1], hi + box[:, 0:1]
            intervals.append((lo, hi))
            counts.append(_count(lo, hi, x0[:, None], dx[:, None], n).sum(axis=1))
        lo = np.maximum(intervals[0][0], intervals[1][0])
        hi = np.minimum(intervals[0][1], intervals[1][1])
        inter = _count(lo, hi, x0[:, None], dx[:, None], n).sum(axis=1)
        union = counts[0] + counts[1] - inter
        out[start : start + chunk] = np.where(union > 0, inter / np.maximum(union, 1), 0.0)
    return out


def raster_iou_bruteforce(a: RotatedBox, b: RotatedBox, n: int = 256):
    """Full n x n grid, every pixel center tested against both boxes."""
    arr = np.array([a.as_tuple(), b.as_tuple()])
    ex0, ey0, ex1, ey1 = _envelope(arr)
    x0, y0, x1, y1 = ex0.min(), ey0.min(), ex1.max(), ey1.max()
    xs = x0 + (np.arange(n) + 0.5) * (x1 - x0) / n
    ys = y0 + (np.arange(n) + 0.5) * (y1 - y0) / n
    X, Y = np.meshgrid(xs, ys)

    def inside(box):
        c, s = math.cos(box.theta), math.sin(box.theta)
        u = (X - box.cx) * c + (Y - box.cy) * s
        v = -(X - box.cx) * s + (Y - box.cy) * c
        return (np.abs(u) <= box.w / 2) & (np.abs(v) <= box.h / 2)

    ia, ib = inside(a), inside(b)
    return (ia & ib).sum(), ia.sum(), ib.sum()


def raster_polygon_area(poly, n: int = 2048):
    """Area of a convex polygon by pixel-center counting."""
    pts = np.asarray(poly, dtype=np.float64)
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    xs = x0 + (np.arange(n) + 0.5) * (x1 - x0) / n
    ys = y0 + (np.arange(n) + 0.5) * (y1 - y0) / n
    X, Y = np.meshgrid(xs, ys)
    sign = 1.0 if _signed(pts) > 0 else -1.0
    mask = np.ones_like(X, dtype=bool)
    for i in range(len(pts)):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % len(pts)]
        mask &= sign * ((bx - ax) * (Y - ay) - (by - ay) * (X - ax)) >= 0
    return mask.sum() * (x1 - x0) * (y1 - y0) / n**2


def raster_intersection_area(p, q, n: int = 2048):
    """Area of two convex polygons' intersection by pixel-center counting."""
    p, q = np.asarray(p, float), np.asarray(q, float)
    both = np.vstack([p, q])
    x0, y0 = both.min(axis=0)
    x1, y1 = both.max(axis=0)
    xs = x0 + (np.arange(n) + 0.5) * (x1 - x0) / n
    ys = y0 + (np.arange(n) + 0.5) * (y1 - y0) / n
    X, Y = np.meshgrid(xs, ys)
    mask = np.ones_like(X, dtype=bool)
    for pts in (p, q):
        sign = 1.0 if _signed(pts) > 0 else -1.0
        for i in range(len(pts)):
            ax, ay = pts[i]
            bx, by = pts[(i + 1) % len(pts)]
            mask &= sign * ((bx - ax) * (Y - ay) - (by - ay) * (X - ax)) >= 0
    return mask.sum() * (x1 - x0) * (y1 - y0) / n**2


def _signed(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def min_rect_sweep(points, step: float = 1e-4, refine: bool = True):
    """Smallest bounding-rectangle area over orientations sampled every ``step`` rad.

    With ``refine`` the neighbourhood of the best coarse angle is resampled
    at ``step * 1e-4`` so the sweep resolves the optimum to ~1e-8 relative.
    """
    pts = np.asarray(points, dtype=np.float64)
    pts = pts - pts.mean(axis=0)

    def areas(ang):
        c, s = np.cos(ang)[:, None], np.sin(ang)[:, None]
        u = pts[None, :, 0] * c + pts[None, :, 1] * s
        v = -pts[None, :, 0] * s + pts[None, :, 1] * c
        return (u.max(1) - u.min(1)) * (v.max(1) - v.min(1))

    ang = np.arange(0.0, math.pi / 2, step)
    a = areas(ang)
    best = float(a.min())
    if refine:
        for k in np.argsort(a)[:4]:
            fine = ang[k] + np.linspace(-step, step, 20001)
            best = min(best, float(areas(fine).min()))
    return best


def nms_reference(dets, iou_thr, class_agnostic):
    """Textbook greedy NMS with a full pairwise check against every kept box."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept = []
    for i in order:
        ok = True
        for k in kept:
            if not class_agnostic and dets[k].class_id != dets[i].class_id:
                continue
            if rotated_iou(dets[k].box, dets[i].box) > iou_thr:
                ok = False
                break
        if ok:
            kept.append(i)
    return kept


def random_boxes(rng, n, lo=1.0, hi=200.0, span=300.0):
    return [
        normalize(
            rng.uniform(0, span), rng.uniform(0, span),
            rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(-math.pi, math.pi),
        )
        for _ in range(n)
    ]


def coverage_ok(origins, patch, dim):
    """Every pixel index 0..dim-1 lies in some window [o, o + patch)."""
    diff = np.zeros(dim + 1, dtype=np.int64)
    for o in origins:
        diff[max(o, 0)] += 1
        diff[min(o + patch, dim)] -= 1
    return bool(np.all(np.cumsum(diff)[:dim] > 0))
