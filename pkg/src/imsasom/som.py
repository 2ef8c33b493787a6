"""Subspace-based optimization of segment indicators and ambiguous currents.

The unknowns are a real vector ``x`` (one entry per segment, mapped to a
PEC indicator through a sigmoid) and, per view, the weights ``w`` of the
current component lying in the weakly radiating subspace of the external
Green operator. The cost adds, per view, the normalized data misfit, the
current leaking onto background segments, and the total field surviving
on PEC segments.

Internally the ambiguous current is carried as the Q-vector
``J_A = V_amb @ w`` and kept in its subspace by projection, which avoids
products with the (Q, Q - q_th) basis in the inner loops. The two
parameterizations are related by an isometry, so conjugate-gradient
iterates are identical.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from scipy.special import expit

from .errors import DegenerateNormalizationError
from .forward import ETA0, ScatteringSetup, incident_field
from .geometry import SegmentGrid
from .operators import (GreenOperators, SubspaceDecomposition, build_operators, decompose,
                        deterministic_current)

log = logging.getLogger(__name__)

Weights = Union[np.ndarray, List[np.ndarray]]


def indicator(x, b: float) -> np.ndarray:
    """Sigmoid PEC indicator ``1 / (1 + exp(-b x))``."""
    if b <= 0:
        raise ValueError("sigmoid steepness b must be positive")
    return expit(b * np.asarray(x, dtype=float))


def binarize(x) -> np.ndarray:
    """Hard PEC map: 1 where ``x > 0``."""
    return (np.asarray(x) > 0).astype(np.int8)


@dataclass
class SomState:
    """Optimization variables.

    ``w`` is a (Q - q_th, V) complex matrix; when views have different
    truncation indices it is a list of per-view vectors instead.
    """

    x: np.ndarray
    w: Weights
    b: float = 1.0

    @property
    def P(self) -> np.ndarray:
        return indicator(self.x, self.b)

    def copy(self) -> "SomState":
        w = [c.copy() for c in self.w] if isinstance(self.w, list) else self.w.copy()
        return SomState(self.x.copy(), w, self.b)


class InversionProblem:
    """Everything that stays fixed while optimizing on one grid.

    Parameters
    ----------
    grid : SegmentGrid
    setup : ScatteringSetup
    E_sca : ndarray, shape (M, V)
        Measured scattered field (zero where masked).
    alpha : float
        SVD truncation parameter.
    """

    def __init__(self, grid: SegmentGrid, setup: ScatteringSetup, E_sca, alpha: float,
                 eta: float = ETA0, operators: Optional[GreenOperators] = None):
        self.grid = grid
        self.setup = setup
        self.alpha = alpha
        self.ops = operators if operators is not None else build_operators(grid, setup, eta)
        self.E_sca = np.asarray(E_sca, dtype=complex)
        if self.E_sca.shape != (setup.M, setup.V):
            raise ValueError(f"E_sca must have shape {(setup.M, setup.V)}, got {self.E_sca.shape}")
        self.E_inc = incident_field(setup, grid.centers)
        self.shared = self.ops.G_ext.ndim == 2

        if self.shared:
            dec = decompose(self.ops.G_ext, alpha)
            self.decs: List[SubspaceDecomposition] = [dec] * setup.V
            self.J_D = deterministic_current(dec, self.E_sca)
            self._V_th = dec.V_th
        else:
            self.decs = [decompose(self.ops.G_ext[v], alpha) for v in range(setup.V)]
            self.J_D = np.column_stack([deterministic_current(d, self.E_sca[:, v])
                                        for v, d in enumerate(self.decs)])
            self._V_th = [d.V_th for d in self.decs]

        self.GJ_D = self.ops.G_int @ self.J_D
        self.nE = _sq_norms(self.E_sca)
        self.nJ = _sq_norms(self.J_D)
        self.nG = _sq_norms(self.GJ_D)
        for name, arr in (("scattered field", self.nE), ("deterministic current", self.nJ),
                          ("G_int J_D", self.nG)):
            bad = np.flatnonzero(~(arr > 0))
            if bad.size:
                raise DegenerateNormalizationError(
                    f"{name} norm vanishes for view(s) {bad.tolist()}; check the data or reduce alpha")

    # -- dimensions ---------------------------------------------------------

    @property
    def Q(self) -> int:
        return self.grid.Q

    @property
    def V(self) -> int:
        return self.setup.V

    @property
    def q_th(self) -> np.ndarray:
        return np.array([d.q_th for d in self.decs])

    @property
    def uniform_q_th(self) -> bool:
        return bool(np.all(self.q_th == self.q_th[0]))

    # -- linear maps ----------------------------------------------------------

    def ext(self, J) -> np.ndarray:
        """G_ext applied view by view: (Q, V) -> (M, V)."""
        if self.shared:
            return self.ops.G_ext @ J
        return np.einsum("vmq,qv->mv", self.ops.G_ext, J)

    def ext_adj(self, R) -> np.ndarray:
        if self.shared:
            return self.ops.G_ext.conj().T @ R
        return np.einsum("vmq,mv->qv", self.ops.G_ext.conj(), R)

    def int_(self, J) -> np.ndarray:
        return self.ops.G_int @ J

    def int_adj(self, R) -> np.ndarray:
        # G_int is complex symmetric, so G_int^H R = conj(G_int conj(R))
        return (self.ops.G_int @ R.conj()).conj()

    def project_ambiguous(self, Z) -> np.ndarray:
        """Remove the retained-subspace component of each column."""
        if self.shared:
            return Z - self._V_th @ (self._V_th.conj().T @ Z)
        out = np.empty_like(Z)
        for v, Vt in enumerate(self._V_th):
            out[:, v] = Z[:, v] - Vt @ (Vt.conj().T @ Z[:, v])
        return out

    def weights_to_current(self, w: Weights) -> np.ndarray:
        """Ambiguous currents (Q, V) from weights."""
        if self.shared:
            return self.decs[0].V_amb @ np.asarray(w)
        cols = [w[:, v] if isinstance(w, np.ndarray) else w[v] for v in range(self.V)]
        return np.column_stack([d.V_amb @ c for d, c in zip(self.decs, cols)])

    def current_to_weights(self, J_A) -> Weights:
        if self.shared:
            return self.decs[0].Vh[self.decs[0].q_th:] @ J_A
        cols = [d.Vh[d.q_th:] @ J_A[:, v] for v, d in enumerate(self.decs)]
        return np.column_stack(cols) if self.uniform_q_th else cols

    def zero_weights(self) -> Weights:
        if self.uniform_q_th:
            return np.zeros((self.decs[0].n_ambiguous, self.V), dtype=complex)
        return [np.zeros(d.n_ambiguous, dtype=complex) for d in self.decs]

    def initial_state(self, b: float = 1.0) -> SomState:
        return SomState(np.zeros(self.Q), self.zero_weights(), b)


def _sq_norms(A) -> np.ndarray:
    A = np.asarray(A)
    return (A.real ** 2 + A.imag ** 2).sum(axis=0)


def total_current(problem: InversionProblem, state: SomState, v: Optional[int] = None) -> np.ndarray:
    """``J_D + J_A`` for view ``v`` (or all views as a (Q, V) matrix)."""
    J = problem.J_D + problem.weights_to_current(state.w)
    return J if v is None else J[:, v]


@dataclass
class CostTerms:
    """Cost value and its per-term split (each summed over views)."""

    total: float
    field: float
    current: float
    boundary: float

    @property
    def curr(self) -> float:
        return self.current + self.boundary


def _terms(problem: InversionProblem, J, GJ, EJ, P) -> CostTerms:
    field_ = _sq_norms(problem.E_sca - EJ) / problem.nE
    current = _sq_norms((1 - P)[:, None] * J) / problem.nJ
    boundary = _sq_norms(P[:, None] * (problem.E_inc + GJ)) / problem.nG
    f, c, b = float(field_.sum()), float(current.sum()), float(boundary.sum())
    return CostTerms(f + c + b, f, c, b)


def cost(problem: InversionProblem, state: SomState) -> CostTerms:
    """Evaluate the normalized cost at ``state``."""
    J = total_current(problem, state)
    return _terms(problem, J, problem.int_(J), problem.ext(J), state.P)


def _x_coefficients(problem, J, GJ):
    """Per-segment weights of the indicator-dependent part of the cost.

    With currents fixed the cost reads ``sum_q (1 - P_q)^2 a_q + P_q^2 c_q``
    plus a constant.
    """
    a = (np.abs(J) ** 2 / problem.nJ).sum(axis=1)
    c = (np.abs(problem.E_inc + GJ) ** 2 / problem.nG).sum(axis=1)
    return a, c


def _grad_x(P, b, a, c):
    return (-2 * (1 - P) * a + 2 * P * c) * b * P * (1 - P)


def gradient(problem: InversionProblem, state: SomState):
    """Analytic gradients of the cost.

    Returns
    -------
    gx : ndarray, shape (Q,)
        dF/dx.
    gw : ndarray or list
        dF/dw in the convention ``dF/dRe(w) - j dF/dIm(w)``, so that the
        step ``w - mu * conj(gw)`` decreases F for small ``mu``.
    """
    P = state.P
    J = total_current(problem, state)
    GJ = problem.int_(J)
    EJ = problem.ext(J)
    a, c = _x_coefficients(problem, J, GJ)
    gx = _grad_x(P, state.b, a, c)
    gJ = 2 * (-problem.ext_adj((problem.E_sca - EJ) / problem.nE)
              + ((1 - P) ** 2)[:, None] * J / problem.nJ
              + problem.int_adj((P ** 2)[:, None] * (problem.E_inc + GJ) / problem.nG))
    gw = problem.current_to_weights(gJ)
    if isinstance(gw, list):
        return gx, [g.conj() for g in gw]
    return gx, gw.conj()


@dataclass
class SomTrace:
    """Per-iteration record of one minimization run."""

    F: List[float] = field(default_factory=list)
    F_field: List[float] = field(default_factory=list)
    F_curr: List[float] = field(default_factory=list)
    xi_tot: List[float] = field(default_factory=list)
    stalled: bool = False

    def append(self, terms: CostTerms):
        self.F.append(terms.total)
        self.F_field.append(terms.field)
        self.F_curr.append(terms.curr)


@dataclass
class MinimizerOptions:
    """Knobs of the two-step conjugate-gradient minimizer.

    ``w_inner`` linear CG iterations on the weights, then one Polak-Ribiere
    step on ``x`` with Armijo backtracking (initial step ``x_step0``,
    contraction ``x_contraction``, sufficient-decrease constant ``armijo_c``).
    ``update_x=False`` freezes ``x`` and leaves a plain CG solve in the weights.
    """

    w_inner: int = 5
    x_step0: float = 1.0
    x_contraction: float = 0.5
    armijo_c: float = 1e-4
    max_backtracks: int = 60
    refresh_every: int = 50
    update_x: bool = True
    x_step_rule: str = "slope"


def minimize(problem: InversionProblem, state: SomState, iterations: int,
             options: Optional[MinimizerOptions] = None, truth=None):
    """Run ``iterations`` outer iterations of the two-step CG scheme.

    Each outer iteration updates all weight columns by linear CG (the cost
    is quadratic in the weights) and then takes one nonlinear CG step on
    ``x``. The cost never increases.

    Parameters
    ----------
    truth : array_like of 0/1, optional
        Ground-truth map on ``problem.grid``; when given, the total
        reconstruction error is recorded after every iteration.

    Returns
    -------
    SomState, SomTrace
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    opts = options or MinimizerOptions()
    from .metrics import total_error  # local: metrics imports this module's helpers

    b = state.b
    x = np.array(state.x, dtype=float)
    J = problem.J_D + problem.weights_to_current(state.w)
    GJ = problem.int_(J)
    EJ = problem.ext(J)
    sE = 1 / np.sqrt(problem.nE)
    sJ = 1 / np.sqrt(problem.nJ)
    sG = 1 / np.sqrt(problem.nG)

    trace = SomTrace()
    g_prev = None
    d_prev = None
    mu_prev = slope_prev = None

    for it in range(iterations):
        if it and it % opts.refresh_every == 0:
            GJ = problem.int_(J)
            EJ = problem.ext(J)
        P = indicator(x, b)

        # -- step 1: linear CG (CGLS) on the ambiguous currents, x fixed ----
        r1 = (problem.E_sca - EJ) * sE
        r2 = -(1 - P)[:, None] * J * sJ
        r3 = -P[:, None] * (problem.E_inc + GJ) * sG
        s = problem.project_ambiguous(problem.ext_adj(r1 * sE) + (1 - P)[:, None] * r2 * sJ
                                      + problem.int_adj(P[:, None] * r3 * sG))
        p = s
        gamma = _sq_norms(s)
        for _ in range(opts.w_inner):
            if not np.any(gamma > 0):
                break
            Ep = problem.ext(p)
            Gp = problem.int_(p)
            q1 = Ep * sE
            q2 = (1 - P)[:, None] * p * sJ
            q3 = P[:, None] * Gp * sG
            qq = _sq_norms(q1) + _sq_norms(q2) + _sq_norms(q3)
            step = np.divide(gamma, qq, out=np.zeros_like(gamma), where=qq > 0)
            J = J + step * p
            GJ = GJ + step * Gp
            EJ = EJ + step * Ep
            r1 = r1 - step * q1
            r2 = r2 - step * q2
            r3 = r3 - step * q3
            s = problem.project_ambiguous(problem.ext_adj(r1 * sE) + (1 - P)[:, None] * r2 * sJ
                                          + problem.int_adj(P[:, None] * r3 * sG))
            gamma_new = _sq_norms(s)
            beta = np.divide(gamma_new, gamma, out=np.zeros_like(gamma), where=gamma > 0)
            p = s + beta * p
            gamma = gamma_new

        # -- step 2: Polak-Ribiere step on x, currents fixed -------------------
        if not opts.update_x:
            trace.append(_terms(problem, J, GJ, EJ, P))
            if truth is not None:
                trace.xi_tot.append(total_error(truth, binarize(x)))
            continue
        a, c = _x_coefficients(problem, J, GJ)
        g = _grad_x(P, b, a, c)

        def fx(xx):
            PP = indicator(xx, b)
            return float(((1 - PP) ** 2 * a + PP ** 2 * c).sum())

        if g_prev is None:
            d = -g
        else:
            beta_pr = max(0.0, float(g @ (g - g_prev)) / max(float(g_prev @ g_prev), 1e-300))
            d = -g + beta_pr * d_prev
        slope = float(g @ d)
        if slope >= 0:
            d, slope = -g, -float(g @ g)
        if slope < 0:
            f0 = fx(x)
            mu = opts.x_step0
            if opts.x_step_rule == "slope" and mu_prev is not None:
                # keep the first-order decrease of the last accepted step
                mu = mu_prev * slope_prev / slope
            for _ in range(opts.max_backtracks):
                if fx(x + mu * d) <= f0 + opts.armijo_c * mu * slope:
                    x = x + mu * d
                    mu_prev, slope_prev = mu, slope
                    break
                mu *= opts.x_contraction
            else:
                log.info("x line search stalled at iteration %d", it)
                trace.stalled = True
        g_prev, d_prev = g, d

        trace.append(_terms(problem, J, GJ, EJ, indicator(x, b)))
        if truth is not None:
            trace.xi_tot.append(total_error(truth, binarize(x)))
        if trace.stalled:
            break

    out = SomState(x, problem.current_to_weights(J - problem.J_D), b)
    return out, trace
