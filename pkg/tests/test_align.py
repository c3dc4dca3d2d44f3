import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from obbkit.align import align_sampling_grid, grid_inside_box
from obbkit.geometry import RotatedBox, normalize


def cell_box(i, j, stride, w_cells, h_cells, theta=0.0):
    return normalize((i + 0.5) * stride, (j + 0.5) * stride, w_cells * stride, h_cells * stride, theta)


@st.composite
def boxes(draw):
    c = st.floats(-300, 300)
    s = st.floats(1, 150)
    return normalize(draw(c), draw(c), draw(s), draw(s), draw(st.floats(-4, 4)))


def test_zero_offsets_when_matched():
    for i, j, stride in [(0, 0, 8), (3, 5, 8), (10, 2, 16), (7, 7, 32)]:
        g = align_sampling_grid(cell_box(i, j, stride, 3, 3), 3, stride, (i, j))
        assert np.all(g.offsets == 0.0)
        assert g.points.shape == g.offsets.shape == (3, 3, 2)


def test_quarter_turn_maps_grid_onto_itself():
    stride, i, j = 8, 2, 3
    box = RotatedBox((i + 0.5) * stride, (j + 0.5) * stride, 24, 24, math.pi / 2)
    g = align_sampling_grid(box, 3, stride, (i, j))
    base = align_sampling_grid(cell_box(i, j, stride, 3, 3), 3, stride, (i, j))
    assert np.allclose(g.offsets[1, 1], 0, atol=1e-12)
    got = sorted(map(tuple, np.round(g.points.reshape(-1, 2), 9)))
    ref = sorted(map(tuple, np.round(base.points.reshape(-1, 2), 9)))
    assert got == ref
    # each tap lands on another tap position, so offset lengths are those of the permutation
    norms = np.linalg.norm(g.offsets.reshape(-1, 2), axis=1)
    assert sorted(np.round(norms, 9)) == sorted(
        np.round(np.linalg.norm((g.points - base.points).reshape(-1, 2) / stride, axis=1), 9)
    )


def test_wide_box_offsets():
    stride = 8
    g = align_sampling_grid(cell_box(4, 4, stride, 6, 3), 3, stride, (4, 4))
    assert g.offsets[1, 0].tolist() == [-1.0, 0.0]
    assert g.offsets[1, 2].tolist() == [1.0, 0.0]
    assert np.all(g.offsets[:, :, 1] == 0)
    assert np.all(np.diff(g.points[1, :, 0]) == 2 * stride)


def test_even_kernel_rejected():
    with pytest.raises(ValueError):
        align_sampling_grid(RotatedBox(0, 0, 4, 4, 0), 4, 8, (0, 0))
    with pytest.raises(ValueError):
        align_sampling_grid(RotatedBox(0, 0, 4, 4, 0), 3, 0, (0, 0))


def test_k1_is_center():
    b = RotatedBox(11, -3, 9, 4, 0.8)
    g = align_sampling_grid(b, 1, 4, (0, 0))
    assert g.points[0, 0].tolist() == [11, -3]


def test_inside():
    b = RotatedBox(40, 30, 20, 8, 0.4)
    g = align_sampling_grid(b, 5, 8, (0, 0))
    assert grid_inside_box(g, b)
    assert not grid_inside_box(g, RotatedBox(400, 300, 20, 8, 0.4))
    center = g.points[2, 2]
    assert center.tolist() == pytest.approx([40, 30])


@given(boxes(), st.sampled_from([1, 3, 5, 7]))
def test_containment(b, k):
    assert grid_inside_box(align_sampling_grid(b, k, 8, (0, 0)), b)


@given(boxes(), st.floats(-math.pi, math.pi))
def test_rotation_equivariance(b, phi):
    g0 = align_sampling_grid(b, 3, 8, (0, 0))
    rb = normalize(b.cx, b.cy, b.w, b.h, b.theta + phi)
    g1 = align_sampling_grid(rb, 3, 8, (0, 0))
    c, s = math.cos(phi), math.sin(phi)
    d = g0.points - [b.cx, b.cy]
    rot = np.stack([c * d[..., 0] - s * d[..., 1], s * d[..., 0] + c * d[..., 1]], -1) + [b.cx, b.cy]
    # normalization may flip the box by pi, which mirrors the tap indices
    assert np.allclose(rot, g1.points, atol=1e-9) or np.allclose(rot[::-1, ::-1], g1.points, atol=1e-9)


@given(boxes())
def test_uniform_spacing(b):
    k = 5
    g = align_sampling_grid(b, k, 8, (0, 0))
    along = np.linalg.norm(np.diff(g.points, axis=1), axis=-1)
    across = np.linalg.norm(np.diff(g.points, axis=0), axis=-1)
    assert np.allclose(along, b.w / k, atol=1e-9)
    assert np.allclose(across, b.h / k, atol=1e-9)
