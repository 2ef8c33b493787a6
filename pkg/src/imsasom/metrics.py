"""Segment-classification error indices and control-parameter calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .geometry import SegmentGrid, edge_pixels
from .shapes import ShapeSpec


@dataclass(frozen=True)
class ErrorReport:
    """Total, internal and external reconstruction errors.

    ``xi_int`` (``xi_ext``) is NaN when the true map has no PEC (no
    background) segment.
    """

    xi_tot: float
    xi_int: float
    xi_ext: float
    Q: int
    Q_int: int
    Q_ext: int


def _as_binary(p, name):
    a = np.asarray(p)
    if a.ndim != 1 or not np.isin(a, (0, 1)).all():
        raise ValueError(f"{name} must be a 1-D 0/1 vector")
    return a.astype(np.int64)


def compare(P_true, P_opt) -> ErrorReport:
    """Error indices of a binary reconstruction against the true map."""
    t = _as_binary(P_true, "P_true")
    o = _as_binary(P_opt, "P_opt")
    if t.shape != o.shape:
        raise ValueError("P_true and P_opt must have the same length")
    Q = t.size
    q_int = int(t.sum())
    q_ext = Q - q_int
    missed = int((t * (1 - o)).sum())
    spurious = int(((1 - t) * o).sum())
    xi_int = missed / q_int if q_int else math.nan
    xi_ext = spurious / q_ext if q_ext else math.nan
    return ErrorReport((missed + spurious) / Q, xi_int, xi_ext, Q, q_int, q_ext)


def total_error(P_true, P_opt) -> float:
    t = np.asarray(P_true)
    o = np.asarray(P_opt)
    return float(np.count_nonzero(t != o)) / t.size


TRUTH_MODES = ("contour", "support", "staircase")


def pixel_centers(grid: SegmentGrid) -> np.ndarray:
    """Pixel centers numbered ``j * n + i`` (row ``j``, column ``i``)."""
    x0, y0 = grid.domain.lower_left
    j, i = np.divmod(np.arange(grid.n * grid.n), grid.n)
    return np.column_stack([x0 + (i + 0.5) * grid.W, y0 + (j + 0.5) * grid.W])


def resample_truth(shape: ShapeSpec, grid: SegmentGrid, mode: str = "contour") -> np.ndarray:
    """Rasterize a shape onto a grid as a 0/1 segment map.

    In ``"contour"`` mode a segment is PEC when its barycenter is closer
    than ``W / 2`` to the contour, so segments merely touching the contour
    with one end are left out. ``"support"`` mode additionally marks every
    segment whose barycenter lies inside the shape. ``"staircase"`` mode
    marks the segments separating pixels whose center is inside the shape
    from the others, i.e. the closed lattice path closest to the contour.
    """
    if mode not in TRUTH_MODES:
        raise ValueError(f"mode must be one of {TRUTH_MODES}")
    if shape.is_empty():
        return np.zeros(grid.Q, dtype=np.int8)
    if mode == "staircase":
        inside = np.append(shape.contains(pixel_centers(grid)), False)
        pix = edge_pixels(grid.n)
        pix = np.where(pix < 0, grid.n * grid.n, pix)
        return (inside[pix[:, 0]] != inside[pix[:, 1]]).astype(np.int8)
    on_contour = shape.distance_to_contour(grid.centers) < 0.5 * grid.W * (1 - 1e-9)
    if mode == "support":
        on_contour |= shape.contains(grid.centers)
    return on_contour.astype(np.int8)


@dataclass
class CalibrationResult:
    alpha_opt: float
    I_opt: int
    # (snr, alpha, I) -> mean xi_tot over seeds
    table: Dict[Tuple[float, float, int], float]
    alpha_by_snr: Dict[float, float]
    I_by_snr: Dict[float, int]
    # the fixed values used in the two one-parameter sweeps
    alpha_ref: float = math.nan
    I_ref: int = 0


def _nearest(grid_values: Sequence[float], value: float):
    arr = np.asarray(grid_values, dtype=float)
    return grid_values[int(np.argmin(np.abs(arr - value)))]


def calibrate(evaluate: Callable[[float, int, float, int], float],
              alpha_grid: Sequence[float], I_grid: Sequence[int],
              snr_set: Sequence[float], seeds: Sequence[int],
              alpha_ref: Optional[float] = None, I_ref: Optional[int] = None,
              mapper: Callable = map) -> CalibrationResult:
    """Pick (alpha, I) by averaging the per-SNR optimum over the SNR set.

    ``evaluate(alpha, I, snr, seed)`` returns the total error of one run.
    Following the one-parameter-at-a-time protocol, alpha is swept with
    ``I = I_ref`` and I with ``alpha = alpha_ref`` (defaults: the largest I
    and the alpha grid value nearest 0.6). Cells that raise are recorded as
    NaN and never selected. ``mapper`` may be a pool's ``map`` for
    concurrent evaluation.
    """
    if not (alpha_grid and I_grid and snr_set and seeds):
        raise ValueError("calibration grids must be non-empty")
    I_ref = max(I_grid) if I_ref is None else I_ref
    alpha_ref = _nearest(alpha_grid, 0.6) if alpha_ref is None else alpha_ref

    cells = sorted({(snr, a, I_ref) for snr in snr_set for a in alpha_grid}
                   | {(snr, alpha_ref, I) for snr in snr_set for I in I_grid})
    jobs = [(a, I, snr, seed) for (snr, a, I) in cells for seed in seeds]
    values = list(mapper(_safe_eval(evaluate), jobs))
    table: Dict[Tuple[float, float, int], float] = {}
    for k, (snr, a, I) in enumerate(cells):
        vals = values[k * len(seeds):(k + 1) * len(seeds)]
        table[(snr, a, I)] = float(np.mean(vals))

    def argmin(keys, pick):
        vals = np.array([table[key] for key in keys])
        vals = np.where(np.isnan(vals), np.inf, vals)
        return pick(keys[int(np.argmin(vals))])

    alpha_by_snr = {snr: argmin([(snr, a, I_ref) for a in alpha_grid], lambda k: k[1])
                    for snr in snr_set}
    I_by_snr = {snr: argmin([(snr, alpha_ref, I) for I in I_grid], lambda k: k[2])
                for snr in snr_set}
    alpha_opt = _nearest(list(alpha_grid), float(np.mean(list(alpha_by_snr.values()))))
    I_opt = _nearest(list(I_grid), float(np.mean(list(I_by_snr.values()))))
    return CalibrationResult(alpha_opt, I_opt, table, alpha_by_snr, I_by_snr, alpha_ref, I_ref)


class _safe_eval:
    def __init__(self, fn):
        self.fn = fn

    def __call__(self, job):
        try:
            return float(self.fn(*job))
        except Exception:  # a failing cell must not abort the sweep
            return math.nan
