"""TM plane-wave illumination and a contour MoM solver for PEC targets.

Fields follow the ``exp(-j 2 pi f t)`` time convention. Field matrices are
plain complex arrays of shape ``(points, views)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import constants
from scipy.special import hankel1

from .errors import GeometryError, SingularSystemError
from .geometry import Domain
from .shapes import ShapeSpec

C0 = constants.c
ETA0 = float(np.sqrt(constants.mu_0 / constants.epsilon_0))
EULER_GAMMA_EXP = float(np.exp(np.euler_gamma))  # 1.78107...

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)


@dataclass(frozen=True, eq=False)
class ScatteringSetup:
    """Frequency, illumination directions and receiver layout.

    Attributes
    ----------
    frequency : float
        Hz.
    views : ndarray, shape (V,)
        Incidence angles in radians; view ``v`` is a plane wave arriving
        from direction ``views[v]``.
    probes : ndarray, shape (M, 2) or (V, M, 2)
        Receiver positions in meters, shared by all views or per view.
    probe_mask : ndarray of bool, shape (V, M), optional
        False where a (view, probe) sample is missing.
    """

    frequency: float
    views: np.ndarray = field(repr=False)
    probes: np.ndarray = field(repr=False)
    probe_mask: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        views = np.atleast_1d(np.asarray(self.views, dtype=float))
        probes = np.asarray(self.probes, dtype=float)
        if self.frequency <= 0:
            raise GeometryError("frequency must be positive")
        if views.size < 1:
            raise GeometryError("at least one view is required")
        if probes.ndim not in (2, 3) or probes.shape[-1] != 2 or probes.shape[-2] < 1:
            raise GeometryError(f"probes must have shape (M, 2) or (V, M, 2), got {probes.shape}")
        if probes.ndim == 3 and probes.shape[0] != views.size:
            raise GeometryError("per-view probes need one probe set per view")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "probes", probes)
        if self.probe_mask is not None:
            mask = np.asarray(self.probe_mask, dtype=bool)
            if mask.shape != (self.V, self.M):
                raise GeometryError("probe_mask must have shape (V, M)")
            object.__setattr__(self, "probe_mask", mask)

    @property
    def wavelength(self) -> float:
        return C0 / self.frequency

    @property
    def k(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def V(self) -> int:
        return self.views.size

    @property
    def M(self) -> int:
        return self.probes.shape[-2]

    @property
    def shared_probes(self) -> bool:
        return self.probes.ndim == 2

    def probes_for_view(self, v: int) -> np.ndarray:
        return self.probes if self.shared_probes else self.probes[v]

    def check_outside(self, domain: Domain) -> None:
        """Raise if any probe falls inside ``domain``."""
        if domain.contains(self.probes.reshape(-1, 2)).any():
            raise GeometryError("probes must lie outside the investigation domain")


def reference_setup(frequency: float = 300e6, V: int = 27, M: int = 27,
                    rho_obs: float = 2.2) -> ScatteringSetup:
    """Uniform views and a circular receiver array.

    ``rho_obs`` is given in wavelengths.
    """
    lam = C0 / frequency
    views = 2 * np.pi * np.arange(V) / V
    th = 2 * np.pi * np.arange(M) / M
    probes = rho_obs * lam * np.column_stack([np.cos(th), np.sin(th)])
    return ScatteringSetup(frequency, views, probes)


def incident_field(setup: ScatteringSetup, points) -> np.ndarray:
    """Unit plane waves at ``points``, shape (P, V); phase zero at the origin."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    d = -np.column_stack([np.cos(setup.views), np.sin(setup.views)])
    return np.exp(1j * setup.k * (p @ d.T))


def _line_integrals(k, obs, starts, ends):
    """Integral of H0(k |r - r'|) over each straight piece, per observation point."""
    mid = 0.5 * (starts + ends)
    half = 0.5 * (ends - starts)
    lengths = 2 * np.hypot(half[:, 0], half[:, 1])
    out = np.zeros((len(obs), len(starts)), dtype=complex)
    for t, w in zip(_GL_NODES, _GL_WEIGHTS):
        q = mid + t * half
        r = np.hypot(obs[:, None, 0] - q[None, :, 0], obs[:, None, 1] - q[None, :, 1])
        out += w * hankel1(0, k * r)
    return out * (0.5 * lengths)


def efie_matrix(k: float, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Point-matching EFIE matrix with pulse basis on straight pieces.

    Off-diagonal entries integrate the kernel with Gauss-Legendre quadrature;
    the diagonal uses the small-argument closed form of the flat-strip
    self term.
    """
    mid = 0.5 * (starts + ends)
    lengths = np.hypot(*(ends - starts).T)
    n = len(mid)
    Z = np.empty((n, n), dtype=complex)
    np.fill_diagonal(Z, 0.0)
    off = ~np.eye(n, dtype=bool)
    Z[off] = _line_integrals(k, mid, starts, ends)[off]
    Z *= -(k * ETA0 / 4)
    self_term = -(k * ETA0 * lengths / 4) * (
        1 + 1j * (2 / np.pi) * (np.log(EULER_GAMMA_EXP * k * lengths / 4) - 1))
    Z[np.diag_indices(n)] = self_term
    return Z


def solve_currents(shape: ShapeSpec, setup: ScatteringSetup, fine_cells_per_lambda: int = 50,
                   cond_limit: float = 1e10):
    """Surface currents induced on ``shape`` by every view.

    Returns
    -------
    starts, ends : ndarray, shape (N, 2)
        Contour pieces.
    J : ndarray, shape (N, V)
    Z : ndarray, shape (N, N)
        The EFIE matrix.
    """
    if fine_cells_per_lambda < 20:
        raise ValueError("fine_cells_per_lambda must be at least 20")
    starts, ends, _ = shape.discretize(setup.wavelength / fine_cells_per_lambda)
    if len(starts) == 0:
        return starts, ends, np.zeros((0, setup.V), complex), np.zeros((0, 0), complex)
    Z = efie_matrix(setup.k, starts, ends)
    cond = np.linalg.cond(Z)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularSystemError(f"EFIE matrix condition number {cond:.3e} exceeds {cond_limit:.1e}")
    rhs = -incident_field(setup, 0.5 * (starts + ends))
    J = np.linalg.solve(Z, rhs)
    return starts, ends, J, Z


def radiate(k: float, starts, ends, J, points) -> np.ndarray:
    """Field radiated at ``points`` by piecewise-constant contour currents."""
    if len(starts) == 0:
        return np.zeros((len(points), J.shape[1]), dtype=complex)
    G = -(k * ETA0 / 4) * _line_integrals(k, np.asarray(points, float), starts, ends)
    return G @ J


def solve_forward(shape: ShapeSpec, setup: ScatteringSetup, fine_cells_per_lambda: int = 50,
                  cond_limit: float = 1e10) -> np.ndarray:
    """Scattered field at the probes, shape (M, V).

    The target contour is cut into pieces of at most
    ``wavelength / fine_cells_per_lambda``, independent of any inversion
    grid. Masked (missing) samples are returned as zero.
    """
    starts, ends, J, _ = solve_currents(shape, setup, fine_cells_per_lambda, cond_limit)
    k = setup.k
    if setup.shared_probes:
        E = radiate(k, starts, ends, J, setup.probes)
    else:
        E = np.empty((setup.M, setup.V), dtype=complex)
        for v in range(setup.V):
            E[:, v] = radiate(k, starts, ends, J[:, v:v + 1], setup.probes[v])[:, 0]
    if setup.probe_mask is not None:
        E = np.where(setup.probe_mask.T, E, 0)
    return E


def add_noise(fields, snr_db: Optional[float], seed: int = 0, mask=None) -> np.ndarray:
    """Additive white circular Gaussian noise at a given SNR.

    The noise variance per sample is ``P_sig * 10**(-snr_db / 10)`` with
    ``P_sig`` the mean squared magnitude of the (unmasked) samples.
    ``snr_db=None`` or ``inf`` returns a copy of the input.
    """
    fields = np.asarray(fields, dtype=complex)
    if fields.size == 0:
        raise ValueError("cannot add noise to an empty field matrix")
    if snr_db is None or np.isposinf(snr_db):
        return fields.copy()
    valid = np.ones(fields.shape, bool) if mask is None else np.asarray(mask, bool)
    p_sig = np.mean(np.abs(fields[valid]) ** 2)
    sigma2 = p_sig * 10.0 ** (-snr_db / 10.0)
    rng = np.random.default_rng(seed)
    noise = np.sqrt(sigma2 / 2) * (rng.standard_normal(fields.shape)
                                   + 1j * rng.standard_normal(fields.shape))
    return np.where(valid, fields + noise, fields)
