"""Iterative multi-scaling: SOM inversions on shrinking regions of interest."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc

from .errors import EmptyRoIError
from .forward import ScatteringSetup
from .geometry import (Domain, SegmentGrid, build_grid, edge_pixels,
                       nearest_same_orientation)
from .metrics import resample_truth
from .shapes import ShapeSpec
from .som import (InversionProblem, MinimizerOptions, SomState, SomTrace, binarize, minimize,
                  total_current)

log = logging.getLogger(__name__)


@dataclass
class ImsaConfig:
    """Controls of the multi-scaling loop and of the inner SOM solver.

    ``b_growth`` multiplies the sigmoid steepness ``b`` at every zooming
    step. ``w_mapping`` selects how ambiguous weights are seeded on a new
    grid: ``"reproject"`` maps the previous total currents and projects
    them on the new ambiguous basis, ``"zero"`` restarts from zero.
    ``x_mapping="zero"`` starts every step from the undecided indicator
    (P = 0.5); ``"nearest"`` copies the closest segment of the previous grid.
    ``roi_expansion`` scales the moment-based RoI side; a hollow contour map
    tends to give a side that barely covers the object.
    """

    S_max: int = 6
    eta_min: float = 0.2
    n: int = 18
    alpha: float = 0.6
    iterations: int = 1000
    b: float = 1.0
    b_growth: float = 1.0
    min_neighbors: int = 1
    threshold: float = 0.5
    roi_expansion: float = 1.5
    w_mapping: str = "reproject"
    x_mapping: str = "zero"
    enclosed: str = "hollow"
    minimizer: MinimizerOptions = field(default_factory=MinimizerOptions)

    def validate(self) -> "ImsaConfig":
        errors = []
        if self.S_max < 1:
            errors.append("S_max must be >= 1")
        if not 0 < self.eta_min < 1:
            errors.append("eta_min must lie in (0, 1)")
        if self.n < 1:
            errors.append("n must be >= 1")
        if not 0 <= self.alpha <= 1:
            errors.append("alpha must lie in [0, 1]")
        if self.iterations < 1:
            errors.append("iterations must be >= 1")
        if self.b <= 0 or self.b_growth <= 0:
            errors.append("b and b_growth must be positive")
        if self.roi_expansion < 1:
            errors.append("roi_expansion must be >= 1")
        if self.min_neighbors < 0:
            errors.append("min_neighbors must be >= 0")
        if self.enclosed not in ENCLOSED_MODES:
            errors.append(f"enclosed must be one of {ENCLOSED_MODES}")
        if self.x_mapping not in ("nearest", "zero"):
            errors.append("x_mapping must be 'nearest' or 'zero'")
        if self.w_mapping not in ("reproject", "zero"):
            errors.append("w_mapping must be 'reproject' or 'zero'")
        if errors:
            from .errors import ConfigError
            raise ConfigError("; ".join(errors))
        return self


@dataclass
class ImsaStep:
    s: int
    roi: Domain
    grid: SegmentGrid
    state: SomState
    som_trace: SomTrace
    q_th: int
    P_binary: np.ndarray
    P_filtered: Optional[np.ndarray] = None
    next_roi: Optional[Domain] = None
    raw_side: Optional[float] = None
    eta: Optional[float] = None
    seconds: float = 0.0


@dataclass
class ImsaTrace:
    steps: List[ImsaStep] = field(default_factory=list)
    termination: str = ""
    seconds: float = 0.0

    @property
    def final(self) -> ImsaStep:
        return self.steps[-1]

    def __len__(self):
        return len(self.steps)


def filter_indicator(grid: SegmentGrid, P_binary, min_neighbors: int = 1) -> np.ndarray:
    """Drop active segments with fewer than ``min_neighbors`` active neighbors.

    Neighbors are active segments whose barycenter lies within one pixel
    width of the segment's own barycenter.
    """
    P = np.asarray(P_binary).astype(np.int8)
    if P.shape != (grid.Q,):
        raise ValueError("indicator length does not match the grid")
    active = np.flatnonzero(P)
    if active.size == 0 or min_neighbors <= 0:
        return P.copy()
    c = grid.centers[active]
    d = np.hypot(c[:, None, 0] - c[None, :, 0], c[:, None, 1] - c[None, :, 1])
    counts = (d <= grid.W * (1 + 1e-9)).sum(axis=1) - 1
    out = P.copy()
    out[active[counts < min_neighbors]] = 0
    return out


def roi_moments(grid: SegmentGrid, P) -> Tuple[np.ndarray, float]:
    """Barycenter of the active segments and twice their mean distance to it."""
    P = np.asarray(P, dtype=float)
    total = P.sum()
    if total <= 0:
        raise EmptyRoIError("no active segment left to define a region of interest")
    center = (grid.centers * P[:, None]).sum(axis=0) / total
    dist = np.hypot(*(grid.centers - center).T)
    return center, float(2 * (dist * P).sum() / total)


def update_roi(grid: SegmentGrid, P_filtered, domain: Optional[Domain] = None,
               roi_expansion: float = 1.0, min_side: Optional[float] = None) -> Tuple[np.ndarray, float]:
    """New RoI center and side from a filtered binary map.

    The raw side is scaled by ``roi_expansion``, kept at least ``min_side``
    (default: one pixel of the investigation domain) and at most the
    domain side, and the RoI is shifted to stay inside ``domain``.
    """
    center, side = roi_moments(grid, P_filtered)
    domain = domain or grid.domain
    if min_side is None:
        min_side = domain.side / grid.n
    side = min(max(side * roi_expansion, min_side), domain.side)
    xmin, ymin, xmax, ymax = domain.bounds
    h = 0.5 * side
    center = np.array([np.clip(center[0], xmin + h, xmax - h), np.clip(center[1], ymin + h, ymax - h)])
    return center, side


def zooming_factor(L_prev: float, L_next: float) -> float:
    """Relative change of the RoI side; 0 when the new side vanishes."""
    if L_next <= 0:
        return 0.0
    return abs(L_next - L_prev) / L_next


def connected_components(grid: SegmentGrid, P) -> int:
    """Number of groups of active segments joined through shared end points."""
    active = np.flatnonzero(np.asarray(P))
    if active.size == 0:
        return 0
    nodes = grid.nodes[active]
    n_nodes = (grid.n + 1) ** 2
    # bipartite segment-node graph; components counted over segments only
    rows = np.repeat(np.arange(active.size), 2)
    cols = active.size + nodes.ravel()
    A = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(active.size + n_nodes,) * 2)
    _, labels = _cc(A, directed=False)
    return int(np.unique(labels[:active.size]).size)


ENCLOSED_MODES = ("keep", "hollow", "fill")


def enclosed_pixels(grid: SegmentGrid, P) -> np.ndarray:
    """Mask of the pixels fenced off from the domain border by active segments."""
    n = grid.n
    pix = edge_pixels(n)
    outside = n * n
    open_edges = np.asarray(P) == 0
    a = np.where(pix[open_edges, 0] < 0, outside, pix[open_edges, 0])
    b = np.where(pix[open_edges, 1] < 0, outside, pix[open_edges, 1])
    A = coo_matrix((np.ones(a.size), (a, b)), shape=(outside + 1,) * 2)
    _, labels = _cc(A, directed=False)
    return labels[:outside] != labels[outside]


def resolve_enclosed(grid: SegmentGrid, P, mode: str = "hollow") -> np.ndarray:
    """Settle segments lying inside a closed loop of active segments.

    The field and the current both vanish inside a closed conductor, so the
    optimizer leaves such segments wherever its trajectory put them.
    ``"hollow"`` clears every segment with enclosed pixels on both sides,
    ``"fill"`` activates every edge of an enclosed pixel, ``"keep"``
    returns the map unchanged.
    """
    if mode not in ENCLOSED_MODES:
        raise ValueError(f"mode must be one of {ENCLOSED_MODES}")
    P = np.asarray(P).astype(np.int8)
    if mode == "keep" or not P.any():
        return P.copy()
    inner = enclosed_pixels(grid, P)
    pix = edge_pixels(grid.n)
    side = np.where(pix >= 0, inner[np.maximum(pix, 0)], False)
    out = P.copy()
    if mode == "hollow":
        out[side.all(axis=1)] = 0
    else:
        out[side.any(axis=1)] = 1
    return out


def _zero_data(E_sca) -> bool:
    return not np.any(np.abs(E_sca) > 0)


def run(config: ImsaConfig, setup: ScatteringSetup, E_sca, domain: Domain,
        truth: Optional[ShapeSpec] = None, truth_mode: str = "contour") -> ImsaTrace:
    """Multi-scaling SOM inversion of ``E_sca`` (M, V) over ``domain``.

    ``truth``, when given, is only used to record the reconstruction error
    along the iterations.
    """
    config.validate()
    trace = ImsaTrace()
    t_start = time.perf_counter()
    roi = domain
    prev: Optional[ImsaStep] = None
    prev_J = None

    for s in range(1, config.S_max + 1):
        t0 = time.perf_counter()
        grid = build_grid(roi, config.n)
        b = config.b * config.b_growth ** (s - 1)
        if _zero_data(E_sca):
            state = SomState(np.zeros(grid.Q), np.zeros((0, setup.V), complex), b)
            step = ImsaStep(s, roi, grid, state, SomTrace(), 0, binarize(state.x))
            step.P_filtered = step.P_binary.copy()
            trace.steps.append(step)
            trace.termination = "no_scatterer"
            break

        problem = InversionProblem(grid, setup, E_sca, config.alpha)
        if prev is None:
            state = problem.initial_state(b)
        else:
            idx = nearest_same_orientation(prev.grid, grid)
            x0 = prev.state.x[idx] if config.x_mapping == "nearest" else np.zeros(grid.Q)
            if config.w_mapping == "reproject":
                w0 = problem.current_to_weights(problem.project_ambiguous(prev_J[idx]))
            else:
                w0 = problem.zero_weights()
            state = SomState(x0, w0, b)

        t_map = resample_truth(truth, grid, truth_mode) if truth is not None else None
        state, som_trace = minimize(problem, state, config.iterations, config.minimizer, truth=t_map)
        P_map = resolve_enclosed(grid, binarize(state.x), config.enclosed)
        step = ImsaStep(s, roi, grid, state, som_trace, int(problem.q_th.max()), P_map)
        trace.steps.append(step)
        prev, prev_J = step, total_current(problem, state)
        log.info("step %d: side %.4g, F %.4g", s, roi.side, som_trace.F[-1] if som_trace.F else np.nan)

        step.P_filtered = filter_indicator(grid, step.P_binary, config.min_neighbors)
        if s == config.S_max:
            step.seconds = time.perf_counter() - t0
            trace.termination = "max_steps"
            break
        try:
            step.raw_side = roi_moments(grid, step.P_filtered)[1]
            center, side = update_roi(grid, step.P_filtered, domain, config.roi_expansion)
        except EmptyRoIError:
            step.seconds = time.perf_counter() - t0
            trace.termination = "empty_roi"
            break
        step.next_roi = Domain(tuple(center), side)
        step.eta = zooming_factor(roi.side, side)
        step.seconds = time.perf_counter() - t0
        if step.eta <= config.eta_min:
            trace.termination = "eta"
            break
        roi = step.next_roi

    trace.seconds = time.perf_counter() - t_start
    return trace


def run_single_resolution(config: ImsaConfig, setup: ScatteringSetup, E_sca, domain: Domain,
                          cells_per_lambda: float = 10.0, truth: Optional[ShapeSpec] = None,
                          truth_mode: str = "contour") -> ImsaTrace:
    """Plain SOM on one uniform grid of about ``wavelength / cells_per_lambda`` pixels."""
    n = max(1, int(round(domain.side / (setup.wavelength / cells_per_lambda))))
    single = replace(config, S_max=1, n=n)
    trace = run(single, setup, E_sca, domain, truth, truth_mode)
    trace.termination = "single_resolution"
    return trace
