"""Green operators on a segment grid and their truncated SVD split."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import hankel1

from .errors import DegenerateSubspaceError, GeometryError
from .forward import ETA0, ScatteringSetup
from .geometry import SegmentGrid

GAMMA = 1.781
SIGMA_FLOOR = 1e-14


def self_term(k: float, eta: float, W: float) -> complex:
    return -(k * eta * W / 4) * (1 + 1j * (2 / np.pi) * (np.log(GAMMA * k * W / 4) - 1))


def green_entry(k: float, eta: float, W: float, r_t, r_q) -> complex:
    """Field at ``r_t`` radiated by a unit current on the segment at ``r_q``."""
    if W <= 0:
        raise GeometryError("segment length must be positive")
    d = float(np.hypot(r_t[0] - r_q[0], r_t[1] - r_q[1]))
    if d == 0.0:
        return complex(self_term(k, eta, W))
    return complex(-(k * eta * W / 4) * hankel1(0, k * d))


def _green_block(k, eta, W, targets, sources):
    d = np.hypot(targets[:, None, 0] - sources[None, :, 0],
                 targets[:, None, 1] - sources[None, :, 1])
    return d, -(k * eta * W / 4) * hankel1(0, k * np.where(d == 0, 1.0, d))


def assemble_external(grid: SegmentGrid, setup: ScatteringSetup, eta: float = ETA0) -> np.ndarray:
    """Probe-to-segment Green matrix.

    Shape (M, Q) for shared probes, (V, M, Q) otherwise. Rows of masked
    (missing) samples are zero.
    """
    k, W = setup.k, grid.W
    probe_sets = [setup.probes] if setup.shared_probes else list(setup.probes)
    blocks = []
    for probes in probe_sets:
        d, G = _green_block(k, eta, W, probes, grid.centers)
        if (d == 0).any():
            raise GeometryError("a probe coincides with a segment barycenter")
        blocks.append(G)
    if setup.shared_probes:
        return blocks[0]
    G = np.stack(blocks)
    if setup.probe_mask is not None:
        G = G * setup.probe_mask[:, :, None]
    return G


def assemble_internal(grid: SegmentGrid, k: float, eta: float = ETA0) -> np.ndarray:
    """Segment-to-segment Green matrix (Q, Q), self term on the diagonal."""
    _, G = _green_block(k, eta, grid.W, grid.centers, grid.centers)
    np.fill_diagonal(G, self_term(k, eta, grid.W))
    return G


def truncation_index(sigma, alpha: float) -> int:
    """Smallest ``Q'`` minimizing ``|cumsum(sigma)[Q'] / sum(sigma) - alpha|``.

    ``alpha = 1`` means no truncation and returns ``len(sigma)``. ``alpha = 0``
    is accepted and keeps a single singular value.
    """
    sigma = np.asarray(sigma, dtype=float)
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 1:
        return sigma.size
    ratio = np.cumsum(sigma) / sigma.sum()
    return int(np.argmin(np.abs(ratio - alpha))) + 1


@dataclass(frozen=True, eq=False)
class SubspaceDecomposition:
    """Full SVD ``G = U diag(s) V^H`` with a truncation index.

    ``U`` is (M, K), ``s`` is (Q,) padded with zeros when M < Q, and ``Vh``
    is (Q, Q).
    """

    U: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)
    Vh: np.ndarray = field(repr=False)
    q_th: int

    @property
    def Q(self) -> int:
        return self.Vh.shape[0]

    @property
    def n_ambiguous(self) -> int:
        return self.Q - self.q_th

    @property
    def V_th(self) -> np.ndarray:
        """Retained right singular vectors as columns, (Q, q_th)."""
        return self.Vh[:self.q_th].conj().T

    @property
    def V_amb(self) -> np.ndarray:
        """Ambiguous-subspace basis as columns, (Q, Q - q_th)."""
        return self.Vh[self.q_th:].conj().T

    def reconstruct(self) -> np.ndarray:
        K = self.U.shape[1]
        return (self.U * self.s[:K]) @ self.Vh[:K]


def decompose(G_ext, alpha: float) -> SubspaceDecomposition:
    """SVD of one external Green matrix and the adaptive truncation index."""
    G_ext = np.asarray(G_ext)
    U, s, Vh = np.linalg.svd(G_ext, full_matrices=True)
    Q = G_ext.shape[1]
    K = min(G_ext.shape)
    s_full = np.zeros(Q)
    s_full[:K] = s
    return SubspaceDecomposition(U[:, :K], s_full, Vh, truncation_index(s_full, alpha))


def deterministic_current(dec: SubspaceDecomposition, E_sca) -> np.ndarray:
    """Minimum-norm current radiating ``E_sca`` within the retained subspace.

    ``E_sca`` may be a single M-vector or an (M, V) matrix of columns.
    """
    q = dec.q_th
    if q > dec.U.shape[1] or dec.s[q - 1] < SIGMA_FLOOR * dec.s[0]:
        raise DegenerateSubspaceError(
            f"singular value {q} is below {SIGMA_FLOOR:g} * sigma_1; reduce alpha")
    coeff = dec.U[:, :q].conj().T @ np.asarray(E_sca)
    coeff = coeff / (dec.s[:q] if coeff.ndim == 1 else dec.s[:q, None])
    return dec.V_th @ coeff


def ambiguous_current(dec: SubspaceDecomposition, w) -> np.ndarray:
    """Linear combination of the discarded right singular vectors."""
    w = np.asarray(w)
    if w.shape[0] != dec.n_ambiguous:
        raise ValueError(f"expected {dec.n_ambiguous} weights, got {w.shape[0]}")
    return dec.Vh[dec.q_th:].conj().T @ w


@dataclass(frozen=True, eq=False)
class GreenOperators:
    G_ext: np.ndarray = field(repr=False)
    G_int: np.ndarray = field(repr=False)
    k: float
    eta: float
    W: float


def build_operators(grid: SegmentGrid, setup: ScatteringSetup, eta: float = ETA0) -> GreenOperators:
    setup.check_outside(grid.domain)
    return GreenOperators(assemble_external(grid, setup, eta), assemble_internal(grid, setup.k, eta),
                          setup.k, eta, grid.W)
