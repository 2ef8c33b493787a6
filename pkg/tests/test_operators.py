import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imsasom.errors import DegenerateSubspaceError, GeometryError
from imsasom.forward import ETA0, ScatteringSetup, reference_setup
from imsasom.geometry import Domain, build_grid
from imsasom.operators import (GAMMA, ambiguous_current, assemble_external, assemble_internal,
                               build_operators, decompose, deterministic_current, green_entry,
                               self_term, truncation_index)

from oracles import q_th_scan

# J0(1) and Y0(1) evaluated once with mpmath at 30 digits
J0_1 = 0.765197686557966551449717526103
Y0_1 = 0.0882569642156769579829267660236


def test_frozen_bessel_values():
    assert float(mpmath.besselj(0, 1)) == pytest.approx(J0_1, rel=1e-15)
    assert float(mpmath.bessely(0, 1)) == pytest.approx(Y0_1, rel=1e-15)


def test_green_entry_at_unit_argument():
    k, W = 2.0, 0.1
    val = green_entry(k, ETA0, W, (0.0, 0.0), (0.5, 0.0))
    expected = -(k * ETA0 * W / 4) * (J0_1 + 1j * Y0_1)
    assert abs(val - expected) < 1e-12 * abs(expected)


def test_self_term_log_cancels():
    k = 3.0
    W = 4 * math.e / (GAMMA * k)
    assert self_term(k, ETA0, W) == pytest.approx(-(k * ETA0 * W / 4), rel=1e-14)
    assert green_entry(k, ETA0, W, (1.0, 2.0), (1.0, 2.0)) == pytest.approx(-(k * ETA0 * W / 4))


def test_green_entry_symmetric():
    a, b = (0.1, -0.4), (0.7, 0.25)
    assert green_entry(5.0, ETA0, 0.1, a, b) == green_entry(5.0, ETA0, 0.1, b, a)


def test_green_entry_rejects_zero_length():
    with pytest.raises(GeometryError):
        green_entry(1.0, ETA0, 0.0, (0, 0), (1, 0))


@pytest.fixture(scope="module")
def setup():
    return reference_setup()


@pytest.fixture(scope="module")
def grid(setup):
    return build_grid(Domain((0, 0), 3 * setup.wavelength), 18)


def test_single_probe_single_segment(setup):
    lam = setup.wavelength
    one = ScatteringSetup(setup.frequency, [0.0], [[lam, lam / 2]])
    g = build_grid(Domain((0.0, 0.0), lam), 1)
    G = assemble_external(g, one)
    assert G.shape == (1, 4)
    # segment 0 is the bottom edge centered at (0, -lam/2): distance lam from the probe
    assert G[0, 0] == pytest.approx(green_entry(one.k, ETA0, lam, (lam, lam / 2), (0, -lam / 2)))


def test_external_reference_size(setup, grid):
    G = assemble_external(grid, setup)
    assert G.shape == (27, 684)
    assert np.isfinite(G).all()
    assert np.linalg.norm(G) > 0


def test_external_linear_in_segment_length(setup):
    small = build_grid(Domain((0, 0), setup.wavelength), 4)
    # same barycenters, twice the segment length: scale every coordinate and the probes
    G1 = assemble_external(small, setup)
    W = small.W
    for m, r in enumerate(setup.probes[:3]):
        for q in range(0, small.Q, 7):
            d = np.hypot(*(r - small.centers[q]))
            assert green_entry(setup.k, ETA0, 2 * W, r, small.centers[q]) == pytest.approx(2 * G1[m, q])
            assert G1[m, q] == pytest.approx(-(setup.k * ETA0 * W / 4)
                                            * complex(mpmath.hankel1(0, setup.k * d)), rel=1e-12)


def test_external_rejects_probe_on_segment(setup):
    g = build_grid(Domain((0, 0), 2.0), 2)
    bad = ScatteringSetup(setup.frequency, [0.0], [[0.5, -1.0]])
    with pytest.raises(GeometryError):
        assemble_external(g, bad)


def test_internal_symmetry_and_diagonal(setup, grid):
    G = assemble_internal(grid, setup.k)
    assert np.max(np.abs(G - G.T)) == 0
    d = np.diag(G)
    assert np.all(d == d[0])
    assert d[0] == self_term(setup.k, ETA0, grid.W)


def test_internal_two_segments_by_hand():
    # 1 x 1 grid: four edges, pick the two horizontal ones (distance W apart)
    k, W = 2 * np.pi, 0.1
    g = build_grid(Domain((0, 0), W), 1)
    G = assemble_internal(g, k)
    off = -(k * ETA0 * W / 4) * complex(mpmath.hankel1(0, k * W))
    diag = -(k * ETA0 * W / 4) * (1 + 1j * (2 / math.pi) * (math.log(1.781 * k * W / 4) - 1))
    np.testing.assert_allclose(G[:2, :2], [[diag, off], [off, diag]], rtol=1e-12)


def test_svd_invariants(setup, grid):
    G = assemble_external(grid, setup)
    dec = decompose(G, 0.6)
    assert np.linalg.norm(dec.reconstruct() - G) / np.linalg.norm(G) < 1e-10
    assert np.all(np.diff(dec.s) <= 0) and np.all(dec.s >= 0)
    np.testing.assert_allclose(dec.Vh @ dec.Vh.conj().T, np.eye(grid.Q), atol=1e-10)
    np.testing.assert_allclose(dec.U.conj().T @ dec.U, np.eye(dec.U.shape[1]), atol=1e-10)
    assert 1 <= dec.q_th <= grid.Q
    assert decompose(G, 1.0).q_th == grid.Q


@pytest.mark.parametrize("sigma,alpha,expected", [
    ((3, 1), 0.6, 1),
    ((1, 1, 1, 1), 0.5, 2),
    ((5, 4, 3), 1.0, 3),
    ((2, 1, 1), 0.0, 1),
])
def test_truncation_index_examples(sigma, alpha, expected):
    assert truncation_index(sigma, alpha) == expected
    if alpha > 0:
        assert q_th_scan(sigma, alpha) == expected


def test_truncation_index_ties_on_random_spectra():
    rng = np.random.default_rng(12)
    for trial in range(20):
        Q = int(rng.integers(2, 12))
        # small-integer spectra make exact ties between candidates common
        sigma = np.sort(rng.integers(0, 4, size=Q))[::-1].astype(float)
        sigma[0] = max(sigma[0], 1.0)
        alpha = float(rng.choice([0.25, 0.5, 0.75, rng.uniform(0.05, 0.95)]))
        assert truncation_index(sigma, alpha) == q_th_scan(sigma, alpha), (sigma, alpha)


@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=30), st.floats(0.0, 1.0))
@settings(max_examples=100, deadline=None)
def test_truncation_index_property(sigma, alpha):
    sigma = sorted(sigma, reverse=True)
    q = truncation_index(sigma, alpha)
    assert 1 <= q <= len(sigma)
    if alpha == 1.0:
        assert q == len(sigma)


def test_truncation_index_rejects_bad_alpha():
    with pytest.raises(ValueError):
        truncation_index([1.0], 1.5)


@pytest.fixture(scope="module")
def small_dec():
    rng = np.random.default_rng(3)
    G = rng.normal(size=(6, 10)) + 1j * rng.normal(size=(6, 10))
    return G, decompose(G, 0.7)


def test_deterministic_current_examples(small_dec):
    G, dec = small_dec
    np.testing.assert_array_equal(deterministic_current(dec, np.zeros(6, complex)), 0)
    J = deterministic_current(dec, dec.s[0] * dec.U[:, 0])
    np.testing.assert_allclose(J, dec.Vh[0].conj(), atol=1e-12)


def test_deterministic_current_least_squares():
    rng = np.random.default_rng(5)
    # more probes than segments, so every singular value is nonzero
    G = rng.normal(size=(10, 6)) + 1j * rng.normal(size=(10, 6))
    dec = decompose(G, 1.0)
    assert dec.q_th == 6
    E = rng.normal(size=10) + 1j * rng.normal(size=10)
    J = deterministic_current(dec, E)
    J_ls = np.linalg.lstsq(G, E, rcond=None)[0]
    np.testing.assert_allclose(J, J_ls, rtol=1e-10)
    r = G @ J - E
    assert np.max(np.abs(dec.U.conj().T @ r)) < 1e-10


def test_deterministic_current_matrix_input(small_dec):
    G, dec = small_dec
    E = np.random.default_rng(2).normal(size=(6, 3)) + 0j
    cols = np.column_stack([deterministic_current(dec, E[:, v]) for v in range(3)])
    np.testing.assert_allclose(deterministic_current(dec, E), cols)


def test_deterministic_current_minimizes_within_subspace(small_dec):
    G, dec = small_dec
    rng = np.random.default_rng(8)
    E = rng.normal(size=6) + 1j * rng.normal(size=6)
    J_D = deterministic_current(dec, E)
    base = np.linalg.norm(G @ J_D - E)
    for _ in range(20):
        c = rng.normal(size=dec.q_th) + 1j * rng.normal(size=dec.q_th)
        assert np.linalg.norm(G @ (J_D + dec.V_th @ c) - E) >= base - 1e-12


def test_degenerate_subspace_guard():
    G = np.zeros((3, 4), complex)
    G[0, 0] = 1.0
    with pytest.raises(DegenerateSubspaceError):
        deterministic_current(decompose(G, 1.0), np.ones(3))


def test_ambiguous_current(small_dec):
    G, dec = small_dec
    n = dec.n_ambiguous
    np.testing.assert_array_equal(ambiguous_current(dec, np.zeros(n)), 0)
    e1 = np.zeros(n)
    e1[0] = 1
    np.testing.assert_allclose(ambiguous_current(dec, e1), dec.Vh[dec.q_th].conj())
    rng = np.random.default_rng(0)
    bound = dec.s[dec.q_th] if dec.q_th < dec.s.size else 0.0
    for _ in range(20):
        w = rng.normal(size=n) + 1j * rng.normal(size=n)
        assert np.linalg.norm(G @ ambiguous_current(dec, w)) <= bound * np.linalg.norm(w) * (1 + 1e-12)
    with pytest.raises(ValueError):
        ambiguous_current(dec, np.zeros(n + 1))


def test_build_operators_checks_probes(setup):
    with pytest.raises(GeometryError):
        build_operators(build_grid(Domain((0, 0), 6 * setup.wavelength), 4), setup)
