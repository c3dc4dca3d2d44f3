"""Sampling grids for aligned convolution over rotated proposals.

For a k x k kernel the tap ``(u, v)`` with ``u, v`` in ``-(k-1)/2 .. (k-1)/2``
samples at ``center + R(theta) (u w / k, v h / k)``: the centers of a k x k
partition of the box. Offsets are measured against the plain convolution tap
at the same kernel position and expressed in feature-map cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .geometry import RotatedBox


@dataclass(frozen=True, eq=False)
class SamplingGrid:
    k: int
    stride: float
    points: np.ndarray  # (k, k, 2) image coordinates, indexed [v, u]
    offsets: np.ndarray  # (k, k, 2) feature-map units, indexed [v, u]


def _taps(k: int) -> np.ndarray:
    r = (k - 1) // 2
    return np.arange(-r, r + 1, dtype=np.float64)


def align_sampling_grid(
    box: RotatedBox, k: int, stride: float, cell: Tuple[int, int]
) -> SamplingGrid:
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel side must be odd and >= 1, got {k}")
    if not stride > 0:
        raise ValueError(f"stride must be positive, got {stride}")
    t = _taps(k)
    u, v = np.meshgrid(t, t)  # u varies along columns
    lx, ly = u * (box.w / k), v * (box.h / k)
    c, s = math.cos(box.theta), math.sin(box.theta)
    px = box.cx + (c * lx - s * ly)
    py = box.cy + (s * lx + c * ly)
    i, j = cell
    tx = (i + 0.5) * stride + u * stride
    ty = (j + 0.5) * stride + v * stride
    points = np.stack([px, py], axis=-1)
    offsets = np.stack([(px - tx) / stride, (py - ty) / stride], axis=-1)
    return SamplingGrid(k, float(stride), points, offsets)


def grid_inside_box(grid: SamplingGrid, box: RotatedBox, tol: float = 1e-9) -> bool:
    """True iff every sample point lies in the closed box (``tol`` is relative)."""
    c, s = math.cos(box.theta), math.sin(box.theta)
    dx = grid.points[..., 0] - box.cx
    dy = grid.points[..., 1] - box.cy
    along = dx * c + dy * s
    across = -dx * s + dy * c
    ok_a = np.abs(along) <= box.w / 2 * (1 + tol)
    ok_c = np.abs(across) <= box.h / 2 * (1 + tol)
    return bool(np.all(ok_a & ok_c))
