import numpy as np
import pytest

from imsasom.errors import ConfigError, EmptyRoIError
from imsasom.forward import reference_setup, solve_forward
from imsasom.geometry import Domain, build_grid
from imsasom.imsa import (ImsaConfig, connected_components, enclosed_pixels, filter_indicator,
                          resolve_enclosed, roi_moments, run, run_single_resolution, update_roi,
                          zooming_factor)
from imsasom.metrics import resample_truth
from imsasom.shapes import ShapeSpec, rectangle


def unit_grid(n=6, side=6.0):
    return build_grid(Domain((0, 0), side), n)


def mark(grid, points):
    """0/1 map with the segments whose barycenter is at the given points."""
    P = np.zeros(grid.Q, np.int8)
    for p in points:
        q = int(np.argmin(np.hypot(*(grid.centers - p).T)))
        assert np.allclose(grid.centers[q], p)
        P[q] = 1
    return P


def pixel_ring(grid, i, j):
    """The four edges of pixel (i, j)."""
    x0, y0 = grid.domain.lower_left
    W = grid.W
    cx, cy = x0 + (i + 0.5) * W, y0 + (j + 0.5) * W
    return mark(grid, [(cx, cy - W / 2), (cx, cy + W / 2), (cx - W / 2, cy), (cx + W / 2, cy)])


def test_filter_all_zero():
    g = unit_grid()
    assert not filter_indicator(g, np.zeros(g.Q)).any()


def test_filter_drops_isolated_segment():
    g = unit_grid()
    P = pixel_ring(g, 1, 1)
    lone = mark(g, [(1.5, 2.0)])
    out = filter_indicator(g, P | lone)
    np.testing.assert_array_equal(out, P)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_filter_keeps_pixel_ring(k):
    g = unit_grid()
    P = pixel_ring(g, 2, 3)
    np.testing.assert_array_equal(filter_indicator(g, P, k), P)


def test_filter_ring_neighbor_count_oracle():
    g = unit_grid()
    P = pixel_ring(g, 2, 3)
    act = np.flatnonzero(P)
    counts = [sum(1 for b in act if b != a and np.hypot(*(g.centers[a] - g.centers[b])) <= g.W + 1e-12)
              for a in act]
    # two perpendicular edges plus the opposite one at exactly one pixel width
    assert counts == [3, 3, 3, 3]
    np.testing.assert_array_equal(filter_indicator(g, P, 3), P)
    assert not filter_indicator(g, P, 4).any()


def test_roi_single_segment():
    g = unit_grid()
    P = mark(g, [(0.5, 1.0)])
    c, side = roi_moments(g, P)
    np.testing.assert_allclose(c, (0.5, 1.0))
    assert side == 0.0
    c, side = update_roi(g, P)
    assert side == pytest.approx(g.W)


def test_roi_two_symmetric_segments():
    g = unit_grid()
    P = mark(g, [(-2.0, 0.5), (2.0, 0.5)])
    c, side = roi_moments(g, P)
    np.testing.assert_allclose(c, (0.0, 0.5))
    assert side == pytest.approx(4.0)


def test_roi_four_corners():
    g = unit_grid()
    pts = [(-1.5, -1.0), (1.5, -1.0), (-1.5, 2.0), (1.5, 2.0)]
    P = mark(g, pts)
    c, side = roi_moments(g, P)
    np.testing.assert_allclose(c, (0.0, 0.5))
    assert side == pytest.approx(2 * np.hypot(1.5, 1.5))


def test_roi_translation_equivariant():
    rng = np.random.default_rng(0)
    g = unit_grid(8, 8.0)
    shifted = build_grid(Domain((2.0, -3.0), 8.0), 8)
    P = (rng.random(g.Q) < 0.2).astype(np.int8)
    c1, s1 = roi_moments(g, P)
    c2, s2 = roi_moments(shifted, P)
    np.testing.assert_allclose(c2 - c1, (2.0, -3.0))
    assert s2 == pytest.approx(s1)


def test_roi_clamped_inside_domain():
    g = unit_grid()
    P = mark(g, [(2.5, 3.0), (3.0, 2.5)])
    c, side = update_roi(g, P, roi_expansion=3.0)
    roi = Domain(tuple(c), side)
    assert g.domain.contains_domain(roi)


def test_empty_roi():
    g = unit_grid()
    with pytest.raises(EmptyRoIError):
        update_roi(g, np.zeros(g.Q))


def test_zooming_factor():
    assert zooming_factor(1.0, 1.0) == 0
    assert zooming_factor(3.0, 2.0) == 0.5
    assert zooming_factor(0.95, 1.0) == pytest.approx(0.05)
    assert zooming_factor(1.0, 0.0) == 0.0


def test_connected_components():
    g = unit_grid()
    assert connected_components(g, np.zeros(g.Q)) == 0
    a = pixel_ring(g, 0, 0)
    b = pixel_ring(g, 4, 4)
    assert connected_components(g, a) == 1
    assert connected_components(g, a | b) == 2
    # touching at a corner node joins the two rings
    assert connected_components(g, a | pixel_ring(g, 1, 1)) == 1


def test_enclosed_and_resolve_modes():
    g = unit_grid()
    # every edge of a 2 x 2 pixel block, and its outline
    block = pixel_ring(g, 1, 1) | pixel_ring(g, 2, 1) | pixel_ring(g, 1, 2) | pixel_ring(g, 2, 2)
    outline = resample_truth(rectangle(2.0, 2.0, center=(-1.0, -1.0)), g, "staircase")
    assert outline.sum() == 8 and np.all(block >= outline)
    inner = enclosed_pixels(g, block)
    assert inner.sum() == 4
    np.testing.assert_array_equal(resolve_enclosed(g, block, "hollow"), outline)
    np.testing.assert_array_equal(resolve_enclosed(g, outline, "fill"), block)
    np.testing.assert_array_equal(resolve_enclosed(g, block, "keep"), block)
    # an open path encloses nothing
    path = mark(g, [(-2.5, -2.0), (-1.5, -2.0)])
    assert not enclosed_pixels(g, path).any()
    with pytest.raises(ValueError):
        resolve_enclosed(g, block, "other")


def test_config_validation():
    ImsaConfig().validate()
    for bad in (dict(S_max=0), dict(eta_min=1.5), dict(eta_min=0.0), dict(alpha=1.2),
                dict(iterations=0), dict(roi_expansion=0.5), dict(enclosed="x"), dict(x_mapping="y"),
                dict(w_mapping="z"), dict(b=0.0)):
        with pytest.raises(ConfigError):
            ImsaConfig(**bad).validate()


def test_empty_domain_terminates_gracefully():
    setup = reference_setup()
    lam = setup.wavelength
    E = solve_forward(ShapeSpec("empty"), setup)
    tr = run(ImsaConfig(iterations=5), setup, E, Domain((0, 0), 3 * lam))
    assert len(tr) == 1
    assert tr.termination == "no_scatterer"
    assert not tr.final.P_binary.any()


@pytest.fixture(scope="module")
def short_run():
    setup = reference_setup()
    lam = setup.wavelength
    shape = ShapeSpec("square", side=0.6 * lam)
    E = solve_forward(shape, setup)
    cfg = ImsaConfig(iterations=40, n=10, S_max=3, eta_min=0.05)
    return run(cfg, setup, E, Domain((0, 0), 3 * lam), truth=shape), cfg


def test_run_trace_invariants(short_run):
    tr, cfg = short_run
    assert 1 <= len(tr) <= cfg.S_max
    D = Domain((0, 0), tr.steps[0].roi.side)
    for s, step in enumerate(tr.steps, start=1):
        assert step.s == s
        assert D.contains_domain(step.roi)
        assert step.P_binary.shape == (step.grid.Q,)
        assert len(step.som_trace.F) == len(step.som_trace.xi_tot) > 0
    for prev, cur in zip(tr.steps, tr.steps[1:]):
        assert cur.roi == prev.next_roi
        if cur.roi.side < prev.roi.side:
            assert cur.grid.W <= prev.grid.W
    assert tr.termination in ("eta", "max_steps", "empty_roi")


def test_run_step_one_covers_domain(short_run):
    tr, _ = short_run
    assert tr.steps[0].roi.side == pytest.approx(3 * reference_setup().wavelength)
    assert tr.steps[0].roi.center == (0.0, 0.0)


def test_single_resolution_grid_size():
    setup = reference_setup()
    lam = setup.wavelength
    E = solve_forward(ShapeSpec("circle", radius=0.3 * lam), setup)
    tr = run_single_resolution(ImsaConfig(iterations=3), setup, E, Domain((0, 0), 3 * lam))
    assert len(tr) == 1
    assert tr.final.grid.n == 30
    assert tr.termination == "single_resolution"


def test_run_deterministic():
    setup = reference_setup(V=6, M=8)
    lam = setup.wavelength
    E = solve_forward(ShapeSpec("circle", radius=0.4 * lam), setup)
    cfg = ImsaConfig(iterations=20, n=8, S_max=2)
    a = run(cfg, setup, E, Domain((0, 0), 3 * lam))
    b = run(cfg, setup, E, Domain((0, 0), 3 * lam))
    for sa, sb in zip(a.steps, b.steps):
        np.testing.assert_array_equal(sa.state.x, sb.state.x)
        assert sa.roi == sb.roi
