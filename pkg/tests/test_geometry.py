import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imsasom.errors import GeometryError
from imsasom.forward import C0
from imsasom.geometry import (HORIZONTAL, VERTICAL, Domain, build_grid, edge_pixels,
                              map_solution, nearest_same_orientation)

from oracles import lattice_edges

LAM = C0 / 300e6


def test_single_pixel():
    g = build_grid(Domain((0.5, 0.5), 1.0), 1)
    assert g.Q == 4
    assert g.W == 1.0
    mids = {tuple(np.round(c, 12)) for c in g.centers}
    assert mids == {(0.5, 0.0), (0.5, 1.0), (0.0, 0.5), (1.0, 0.5)}


def test_reference_grid_size():
    g = build_grid(Domain((0, 0), 3 * LAM), 18)
    assert g.Q == 684
    assert g.W == pytest.approx(LAM / 6)


def test_coarse_grid_distinct_barycenters():
    g = build_grid(Domain((0, 0), 3 * LAM), 2)
    assert g.Q == 12
    assert len({tuple(c) for c in np.round(g.centers / LAM, 9)}) == 12


@pytest.mark.parametrize("n", range(1, 9))
def test_edge_count_matches_enumeration(n):
    g = build_grid(Domain((n / 2, n / 2), float(n)), n)
    nodes = {tuple(sorted(((a % (n + 1), a // (n + 1)), (b % (n + 1), b // (n + 1)))))
             for a, b in g.nodes}
    assert g.Q == 2 * n * (n + 1)
    assert nodes == lattice_edges(n)


def test_ordering_horizontal_first_row_major():
    g = build_grid(Domain((0, 0), 3.0), 3)
    nh = 3 * 4
    assert (g.orientation[:nh] == HORIZONTAL).all()
    assert (g.orientation[nh:] == VERTICAL).all()
    # horizontal rows go bottom to top, left to right within a row
    h = g.centers[:nh]
    assert np.all(np.diff(h[:, 1].reshape(4, 3), axis=0) > 0)
    assert np.all(np.diff(h[:, 0].reshape(4, 3), axis=1) > 0)


def test_deterministic():
    a = build_grid(Domain((0.1, -0.2), 2.0), 7)
    b = build_grid(Domain((0.1, -0.2), 2.0), 7)
    assert np.array_equal(a.centers, b.centers)
    assert np.array_equal(a.nodes, b.nodes)


@given(n=st.integers(1, 12), side=st.floats(0.01, 50), cx=st.floats(-5, 5), cy=st.floats(-5, 5))
@settings(max_examples=40, deadline=None)
def test_grid_invariants(n, side, cx, cy):
    d = Domain((cx, cy), side)
    g = build_grid(d, n)
    assert g.Q == 2 * n * (n + 1)
    assert d.contains(g.centers).all()
    ends = g.endpoints()
    lengths = np.hypot(*(ends[:, 1] - ends[:, 0]).T)
    np.testing.assert_allclose(lengths, side / n, rtol=1e-12)


@pytest.mark.parametrize("bad", [0, -1, 2.5])
def test_bad_pixel_count(bad):
    with pytest.raises(GeometryError):
        build_grid(Domain((0, 0), 1.0), bad)


@pytest.mark.parametrize("side", [0.0, -1.0, float("nan")])
def test_bad_side(side):
    with pytest.raises(GeometryError):
        Domain((0, 0), side)


def test_edge_pixels_small_grid():
    # n = 2: pixels 0 1 (bottom row), 2 3 (top row)
    pix = edge_pixels(2)
    assert pix.shape == (12, 2)
    # horizontal rows 0, 1, 2
    assert pix[:6].tolist() == [[-1, 0], [-1, 1], [0, 2], [1, 3], [2, -1], [3, -1]]
    # vertical rows 0, 1 with x levels 0, 1, 2
    assert pix[6:].tolist() == [[-1, 0], [0, 1], [1, -1], [-1, 2], [2, 3], [3, -1]]


def test_map_identity():
    g = build_grid(Domain((0, 0), 3.0), 4)
    x = np.random.default_rng(0).normal(size=g.Q)
    np.testing.assert_array_equal(map_solution(g, x, g), x)
    np.testing.assert_array_equal(map_solution(g, np.zeros(g.Q), g), np.zeros(g.Q))
    # idempotent
    np.testing.assert_array_equal(map_solution(g, map_solution(g, x, g), g), x)


def test_map_uniform_into_inner_roi():
    old = build_grid(Domain((0, 0), 3.0), 2)
    new = build_grid(Domain((0.2, -0.1), 1.0), 2)
    np.testing.assert_array_equal(map_solution(old, np.ones(old.Q), new), np.ones(new.Q))


def test_map_matches_brute_force():
    old = build_grid(Domain((0, 0), 3.0), 5)
    new = build_grid(Domain((0.3, 0.1), 1.3), 4)
    idx = nearest_same_orientation(old, new)
    for q in range(new.Q):
        best, best_d = None, np.inf
        for p in range(old.Q):
            if old.orientation[p] != new.orientation[q]:
                continue
            d = np.sum((old.centers[p] - new.centers[q]) ** 2)
            if d < best_d:
                best, best_d = p, d
        assert idx[q] == best


def test_map_errors():
    old = build_grid(Domain((0, 0), 1.0), 2)
    with pytest.raises(GeometryError):
        map_solution(old, np.zeros(old.Q + 1), old)
    with pytest.raises(GeometryError):
        map_solution(old, np.zeros(old.Q), build_grid(Domain((0, 0), 2.0), 2))
