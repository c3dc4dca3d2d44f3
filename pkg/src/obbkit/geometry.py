"""Oriented rectangles, convex clipping and rotated IoU.

Boxes use the long-side convention: ``w >= h`` and ``theta`` in
``(-pi/2, pi/2]`` is the angle of the long side measured from the +x axis.
Polygons are counter-clockwise in a y-up sense (positive shoelace area).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

Point = Tuple[float, float]

HALF_PI = math.pi / 2


class InvalidGeometryError(ValueError):
    """Raised for non-finite, non-positive or degenerate geometry."""


def normalize_angle(theta: float) -> float:
    """Map an angle to ``(-pi/2, pi/2]`` modulo pi. Idempotent on that range."""
    if not math.isfinite(theta):
        raise InvalidGeometryError(f"non-finite angle {theta!r}")
    if -HALF_PI < theta <= HALF_PI:
        return theta
    theta = theta - math.pi * round(theta / math.pi)
    if theta <= -HALF_PI:
        theta += math.pi
    elif theta > HALF_PI:
        theta -= math.pi
    return theta


@dataclass(frozen=True)
class RotatedBox:
    cx: float
    cy: float
    w: float
    h: float
    theta: float

    def __post_init__(self) -> None:
        vals = (self.cx, self.cy, self.w, self.h, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidGeometryError(f"non-finite box {vals}")
        if not self.w >= self.h > 0:
            raise InvalidGeometryError(
                f"box sizes must satisfy w >= h > 0, got w={self.w}, h={self.h}"
            )
        if not -HALF_PI < self.theta <= HALF_PI:
            raise InvalidGeometryError(f"theta {self.theta} outside (-pi/2, pi/2]")

    @classmethod
    def from_raw(cls, cx, cy, w, h, theta) -> "RotatedBox":
        return normalize(cx, cy, w, h, theta)

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> Tuple[float, float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h, self.theta)

    def translate(self, dx: float, dy: float) -> "RotatedBox":
        return RotatedBox(self.cx + dx, self.cy + dy, self.w, self.h, self.theta)


@dataclass(frozen=True)
class AxisBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self) -> None:
        if not (self.xmin <= self.xmax and self.ymin <= self.ymax):
            raise InvalidGeometryError(f"inverted axis box {self}")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def overlaps(self, other: "AxisBox") -> bool:
        """Closed-interval overlap test (touching boxes overlap)."""
        return not (
            self.xmax < other.xmin
            or other.xmax < self.xmin
            or self.ymax < other.ymin
            or other.ymax < self.ymin
        )


@dataclass(frozen=True)
class Quad:
    """Four vertices, stored counter-clockwise.

    Clockwise input is reversed on construction. Zero-area quads raise
    unless ``degenerate=True`` is passed.
    """

    points: Tuple[Point, Point, Point, Point]
    degenerate: bool = False

    def __post_init__(self) -> None:
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if len(pts) != 4:
            raise InvalidGeometryError(f"quad needs 4 vertices, got {len(pts)}")
        if not all(math.isfinite(c) for p in pts for c in p):
            raise InvalidGeometryError("non-finite quad vertex")
        area = signed_area(pts)
        if area < 0:
            pts = (pts[0], pts[3], pts[2], pts[1])
        if area == 0 and not self.degenerate:
            raise InvalidGeometryError("degenerate quad (zero area)")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_flat(cls, coords: Sequence[float], degenerate: bool = False) -> "Quad":
        if len(coords) != 8:
            raise InvalidGeometryError(f"expected 8 coordinates, got {len(coords)}")
        it = iter(coords)
        return cls(tuple(zip(it, it)), degenerate=degenerate)

    def flat(self) -> List[float]:
        return [c for p in self.points for c in p]

    @property
    def area(self) -> float:
        return signed_area(self.points)


def normalize(cx: float, cy: float, w: float, h: float, theta: float) -> RotatedBox:
    """Return the long-side-normalized box describing the same rectangle."""
    vals = (cx, cy, w, h, theta)
    if not all(math.isfinite(v) for v in vals):
        raise InvalidGeometryError(f"non-finite box {vals}")
    if w <= 0 or h <= 0:
        raise InvalidGeometryError(f"box sizes must be positive, got w={w}, h={h}")
    if w < h:
        w, h = h, w
        theta = theta + HALF_PI
    return RotatedBox(float(cx), float(cy), float(w), float(h), normalize_angle(theta))


def _corners_local(w: float, h: float, theta: float) -> List[Point]:
    c, s = math.cos(theta), math.sin(theta)
    hw, hh = w / 2, h / 2
    out = []
    for sx, sy in ((hw, hh), (-hw, hh), (-hw, -hh), (hw, -hh)):
        out.append((c * sx - s * sy, s * sx + c * sy))
    return out


def obb_to_quad(box: RotatedBox) -> Quad:
    pts = [(box.cx + x, box.cy + y) for x, y in _corners_local(box.w, box.h, box.theta)]
    return Quad(tuple(pts))


def signed_area(poly: Sequence[Point]) -> float:
    """Shoelace area; positive for counter-clockwise polygons."""
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return acc / 2


def polygon_area(poly: Sequence[Point]) -> float:
    return abs(signed_area(poly))


def convex_hull(points: Iterable[Point]) -> List[Point]:
    """Andrew's monotone chain; counter-clockwise, collinear points dropped."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: List[Point] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: List[Point] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def min_area_rect(points: Iterable[Point]) -> RotatedBox:
    """Minimum-area enclosing rectangle of a point set.

    The optimal rectangle has a side collinear with a hull edge, so every
    hull edge direction is tried (rotating calipers over the hull).
    """
    hull = convex_hull(points)
    if len(hull) < 3 or polygon_area(hull) <= 0:
        raise InvalidGeometryError("points are collinear; no enclosing rectangle")
    best = None
    n = len(hull)
    for i in range(n):
        x0, y0 = hull[i]
        x1, y1 = hull[(i + 1) % n]
        length = math.hypot(x1 - x0, y1 - y0)
        ux, uy = (x1 - x0) / length, (y1 - y0) / length
        # project relative to the edge start to keep magnitudes small
        along = [(px - x0) * ux + (py - y0) * uy for px, py in hull]
        across = [-(px - x0) * uy + (py - y0) * ux for px, py in hull]
        a_lo, a_hi = min(along), max(along)
        c_lo, c_hi = min(across), max(across)
        area = (a_hi - a_lo) * (c_hi - c_lo)
        if best is None or area < best[0]:
            best = (area, i, ux, uy, a_lo, a_hi, c_lo, c_hi)
    _, i, ux, uy, a_lo, a_hi, c_lo, c_hi = best
    x0, y0 = hull[i]
    ma, mc = (a_lo + a_hi) / 2, (c_lo + c_hi) / 2
    cx = x0 + ma * ux - mc * uy
    cy = y0 + ma * uy + mc * ux
    return normalize(cx, cy, a_hi - a_lo, c_hi - c_lo, math.atan2(uy, ux))


def quad_to_obb(quad: Quad) -> RotatedBox:
    return min_area_rect(quad.points)


def clip_convex(subject: Sequence[Point], clip: Sequence[Point]) -> List[Point]:
    """Sutherland-Hodgman clip of ``subject`` by the convex CCW polygon ``clip``.

    Points on a clip edge count as inside.
    """
    out = list(subject)
    m = len(clip)
    for k in range(m):
        if not out:
            break
        ax, ay = clip[k]
        bx, by = clip[(k + 1) % m]
        ex, ey = bx - ax, by - ay
        src, out = out, []
        px, py = src[-1]
        sp = ex * (py - ay) - ey * (px - ax)
        for cx, cy in src:
            sc = ex * (cy - ay) - ey * (cx - ax)
            if sc >= 0:
                if sp < 0:
                    t = sp / (sp - sc)
                    out.append((px + t * (cx - px), py + t * (cy - py)))
                out.append((cx, cy))
            elif sp >= 0:
                t = sp / (sp - sc)
                out.append((px + t * (cx - px), py + t * (cy - py)))
            px, py, sp = cx, cy, sc
    return out


def _as_points(poly) -> List[Point]:
    if isinstance(poly, Quad):
        return list(poly.points)
    return [(float(x), float(y)) for x, y in poly]


def convex_intersection_area(a, b) -> float:
    """Area of the intersection of two convex polygons (``Quad`` or point lists)."""
    pa, pb = _as_points(a), _as_points(b)
    if signed_area(pb) < 0:
        pb = pb[::-1]
    if signed_area(pa) < 0:
        pa = pa[::-1]
    return max(polygon_area(clip_convex(pa, pb)), 0.0)


def hbb_envelope(box: RotatedBox) -> AxisBox:
    xs, ys = zip(*obb_to_quad(box).points)
    return AxisBox(min(xs), min(ys), max(xs), max(ys))


def rotated_iou(a: RotatedBox, b: RotatedBox) -> float:
    """Intersection over union of two oriented rectangles.

    The result is exactly symmetric: the pair is put in a canonical order
    and expressed relative to the first box's center before clipping.
    """
    if a == b:
        return 1.0
    if not hbb_envelope(a).overlaps(hbb_envelope(b)):
        return 0.0
    if b.as_tuple() < a.as_tuple():
        a, b = b, a
    dx, dy = b.cx - a.cx, b.cy - a.cy
    pa = _corners_local(a.w, a.h, a.theta)
    pb = [(dx + x, dy + y) for x, y in _corners_local(b.w, b.h, b.theta)]
    inter = polygon_area(clip_convex(pa, pb))
    union = a.area + b.area - inter
    return min(max(inter / union, 0.0), 1.0)


# ---------------------------------------------------------------------------
# batched kernels over (N, 5) arrays of normalized boxes


def boxes_to_array(boxes: Sequence[RotatedBox]) -> np.ndarray:
    if len(boxes) == 0:
        return np.zeros((0, 5), dtype=np.float64)
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64)


def corners_array(boxes: np.ndarray) -> np.ndarray:
    """(N, 5) boxes -> (N, 4, 2) CCW corners, same vertex order as ``obb_to_quad``."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 5)
    c, s = np.cos(boxes[:, 4]), np.sin(boxes[:, 4])
    hw, hh = boxes[:, 2] / 2, boxes[:, 3] / 2
    sx = np.stack([hw, -hw, -hw, hw], axis=1)
    sy = np.stack([hh, hh, -hh, -hh], axis=1)
    x = c[:, None] * sx - s[:, None] * sy
    y = s[:, None] * sx + c[:, None] * sy
    return np.stack([boxes[:, 0:1] + x, boxes[:, 1:2] + y], axis=-1)


def envelopes_array(boxes: np.ndarray) -> np.ndarray:
    """(N, 5) boxes -> (N, 4) ``xmin, ymin, xmax, ymax`` from the corners."""
    q = corners_array(boxes)
    return np.concatenate([q.min(axis=1), q.max(axis=1)], axis=1)


def _local_corners(w, h, theta, ox, oy):
    c, s = np.cos(theta), np.sin(theta)
    hw, hh = w / 2, h / 2
    sx = np.stack([hw, -hw, -hw, hw], axis=1)
    sy = np.stack([hh, hh, -hh, -hh], axis=1)
    x = ox[:, None] + (c[:, None] * sx - s[:, None] * sy)
    y = oy[:, None] + (s[:, None] * sx + c[:, None] * sy)
    return x, y


def _clip_batch(sx, sy, count, cx, cy):
    """Vectorized Sutherland-Hodgman; one subject/clip pair per row.

    ``sx, sy``: (P, K) subject vertices, the first ``count[p]`` valid.
    ``cx, cy``: (P, 4) clip rectangle vertices, CCW.
    """
    rows = np.arange(sx.shape[0])
    for k in range(4):
        if sx.shape[1] == 0:
            break
        ax, ay = cx[:, k : k + 1], cy[:, k : k + 1]
        ex = cx[:, (k + 1) % 4 : (k + 1) % 4 + 1] - ax
        ey = cy[:, (k + 1) % 4 : (k + 1) % 4 + 1] - ay
        side = ex * (sy - ay) - ey * (sx - ax)
        width = sx.shape[1]
        idx = np.arange(width)[None, :]
        valid = idx < count[:, None]
        prev = np.where(idx == 0, count[:, None] - 1, idx - 1)
        prev = np.clip(prev, 0, width - 1)
        px = np.take_along_axis(sx, prev, axis=1)
        py = np.take_along_axis(sy, prev, axis=1)
        sp = np.take_along_axis(side, prev, axis=1)
        cur_in = side >= 0
        prev_in = sp >= 0
        emit_i = valid & (cur_in != prev_in)
        emit_c = valid & cur_in
        n_emit = emit_i.astype(np.int64) + emit_c
        offs = np.cumsum(n_emit, axis=1) - n_emit
        new_count = n_emit.sum(axis=1)
        new_w = int(new_count.max()) if new_count.size else 0
        ox = np.zeros((sx.shape[0], new_w))
        oy = np.zeros((sx.shape[0], new_w))
        if new_w:
            # t is only read where the edge crosses the line (denominator != 0)
            with np.errstate(invalid="ignore", divide="ignore"):
                t = sp / (sp - side)
                ix = px + t * (sx - px)
                iy = py + t * (sy - py)
            r, c = np.nonzero(emit_i)
            ox[r, offs[r, c]] = ix[r, c]
            oy[r, offs[r, c]] = iy[r, c]
            r, c = np.nonzero(emit_c)
            pos = offs[r, c] + emit_i[r, c]
            ox[r, pos] = sx[r, c]
            oy[r, pos] = sy[r, c]
        sx, sy, count = ox, oy, new_count
    return sx, sy, count


def _shoelace_batch(x, y, count):
    # column-by-column accumulation: the value for a row never depends on
    # the padded width, i.e. on which other pairs share the batch
    n = x.shape[0]
    acc = np.zeros(n)
    width = x.shape[1]
    rows = np.arange(n)
    for i in range(width):
        j = np.where(i + 1 >= count, 0, i + 1)
        j = np.minimum(j, width - 1)
        term = x[:, i] * y[rows, j] - x[rows, j] * y[:, i]
        acc = acc + np.where(i < count, term, 0.0)
    return np.abs(acc) / 2


def _canonical_swap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """True where ``b`` sorts before ``a`` lexicographically on all five fields."""
    swap = np.zeros(a.shape[0], dtype=bool)
    decided = np.zeros(a.shape[0], dtype=bool)
    for f in range(5):
        lt = (b[:, f] < a[:, f]) & ~decided
        gt = (b[:, f] > a[:, f]) & ~decided
        swap |= lt
        decided |= lt | gt
    return swap


def paired_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise rotated IoU of two (N, 5) arrays of normalized boxes."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 5)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 5)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    n = a.shape[0]
    out = np.zeros(n)
    if n == 0:
        return out
    same = np.all(a == b, axis=1)
    ea, eb = envelopes_array(a), envelopes_array(b)
    touch = ~(
        (ea[:, 2] < eb[:, 0])
        | (eb[:, 2] < ea[:, 0])
        | (ea[:, 3] < eb[:, 1])
        | (eb[:, 3] < ea[:, 1])
    )
    work = touch & ~same
    out[same] = 1.0
    if not work.any():
        return out
    aa, bb = a[work], b[work]
    swap = _canonical_swap(aa, bb)
    aa, bb = np.where(swap[:, None], bb, aa), np.where(swap[:, None], aa, bb)
    zeros = np.zeros(aa.shape[0])
    sx, sy = _local_corners(aa[:, 2], aa[:, 3], aa[:, 4], zeros, zeros)
    cx, cy = _local_corners(
        bb[:, 2], bb[:, 3], bb[:, 4], bb[:, 0] - aa[:, 0], bb[:, 1] - aa[:, 1]
    )
    count = np.full(aa.shape[0], 4, dtype=np.int64)
    px, py, pc = _clip_batch(sx, sy, count, cx, cy)
    inter = _shoelace_batch(px, py, pc)
    union = aa[:, 2] * aa[:, 3] + bb[:, 2] * bb[:, 3] - inter
    out[work] = np.clip(inter / union, 0.0, 1.0)
    return out


def pairwise_iou(
    a: np.ndarray, b: np.ndarray, prefilter: bool = True, chunk: int = 4096
) -> np.ndarray:
    """(N, 5) x (M, 5) -> (N, M) rotated IoU matrix.

    With ``prefilter`` only pairs whose corner envelopes touch are clipped;
    the others are exactly zero. Row chunks bound peak memory.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 5)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 5)
    n, m = a.shape[0], b.shape[0]
    out = np.zeros((n, m))
    if n == 0 or m == 0:
        return out
    eb = envelopes_array(b)
    ea = envelopes_array(a)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        if prefilter:
            e = ea[start:stop]
            mask = (
                (e[:, None, 0] <= eb[None, :, 2])
                & (eb[None, :, 0] <= e[:, None, 2])
                & (e[:, None, 1] <= eb[None, :, 3])
                & (eb[None, :, 1] <= e[:, None, 3])
            )
            ri, ci = np.nonzero(mask)
        else:
            ri, ci = np.divmod(np.arange((stop - start) * m), m)
        if ri.size:
            out[start + ri, ci] = paired_iou(a[start + ri], b[ci])
    return out
