"""Closed-form TM scattering by a circular PEC cylinder (eigenfunction series)."""

from __future__ import annotations

import numpy as np
from scipy.special import hankel1, jv

from .forward import ScatteringSetup


def pec_cylinder_field(setup: ScatteringSetup, radius: float, center=(0.0, 0.0),
                       n_terms: int | None = None) -> np.ndarray:
    """Scattered field at the probes for a PEC circle, shape (M, V).

    Uses the same unit plane-wave convention as
    :func:`imsasom.forward.incident_field`.
    """
    k = setup.k
    ka = k * radius
    if n_terms is None:
        n_terms = int(np.ceil(ka + 10 * ka ** (1 / 3) + 10))
    n = np.arange(-n_terms, n_terms + 1)
    c = np.asarray(center, float)
    d = -np.column_stack([np.cos(setup.views), np.sin(setup.views)])
    phase0 = np.exp(1j * k * (d @ c))  # incident phase at the cylinder center
    coef = -((-1j) ** n) * jv(n, ka) / hankel1(n, ka)
    out = np.empty((setup.M, setup.V), dtype=complex)
    for v in range(setup.V):
        p = setup.probes_for_view(v) - c
        rho = np.hypot(p[:, 0], p[:, 1])
        phi = np.arctan2(p[:, 1], p[:, 0])
        terms = coef[None, :] * hankel1(n[None, :], k * rho[:, None]) \
            * np.exp(1j * n[None, :] * (phi[:, None] - setup.views[v]))
        out[:, v] = phase0[v] * terms.sum(axis=1)
    return out
