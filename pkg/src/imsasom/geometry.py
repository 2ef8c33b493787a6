"""Square investigation domains and their segment (edge) lattices.

An ``n x n`` pixel partition of a square domain has ``Q = 2 n (n + 1)``
edges. Every edge carries one unknown of the inversion. Edges are stored
in a fixed order so that every matrix built on a grid is reproducible:
horizontal edges first (row by row from the bottom, left to right), then
vertical edges (row by row from the bottom, left to right).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .errors import GeometryError

HORIZONTAL = 0
VERTICAL = 1


@dataclass(frozen=True)
class Domain:
    """Axis-aligned square region given by its center and side (meters)."""

    center: Tuple[float, float]
    side: float

    def __post_init__(self):
        if not np.isfinite(self.side) or self.side <= 0:
            raise GeometryError(f"domain side must be positive, got {self.side}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "side", float(self.side))

    @property
    def lower_left(self) -> np.ndarray:
        return np.array(self.center) - 0.5 * self.side

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax)."""
        h = 0.5 * self.side
        cx, cy = self.center
        return (cx - h, cy - h, cx + h, cy + h)

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        """Boolean mask of points lying inside or on the boundary."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        xmin, ymin, xmax, ymax = self.bounds
        eps = tol * self.side
        return ((p[:, 0] >= xmin - eps) & (p[:, 0] <= xmax + eps)
                & (p[:, 1] >= ymin - eps) & (p[:, 1] <= ymax + eps))

    def contains_domain(self, other: "Domain", tol: float = 1e-9) -> bool:
        a, b = self.bounds, other.bounds
        eps = tol * self.side
        return (b[0] >= a[0] - eps and b[1] >= a[1] - eps
                and b[2] <= a[2] + eps and b[3] <= a[3] + eps)


@dataclass(frozen=True)
class Segment:
    barycenter: Tuple[float, float]
    orientation: str  # "horizontal" | "vertical"
    length: float


@dataclass(frozen=True, eq=False)
class SegmentGrid:
    """Edges of an ``n x n`` pixel lattice covering ``domain``.

    Attributes
    ----------
    domain : Domain
    n : int
        Pixels per side.
    centers : ndarray, shape (Q, 2)
        Segment barycenters.
    orientation : ndarray of int8, shape (Q,)
        ``HORIZONTAL`` (0) or ``VERTICAL`` (1).
    nodes : ndarray of int, shape (Q, 2)
        Indices of the two lattice nodes joined by each segment, with
        node ``(i, j)`` numbered ``j * (n + 1) + i``.
    """

    domain: Domain
    n: int
    centers: np.ndarray = field(repr=False)
    orientation: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)

    @property
    def Q(self) -> int:
        return self.centers.shape[0]

    @property
    def W(self) -> float:
        """Length of every segment (also the pixel side)."""
        return self.domain.side / self.n

    @property
    def segments(self) -> List[Segment]:
        names = ("horizontal", "vertical")
        return [Segment((float(c[0]), float(c[1])), names[o], self.W)
                for c, o in zip(self.centers, self.orientation)]

    def endpoints(self) -> np.ndarray:
        """Segment end points, shape (Q, 2, 2)."""
        half = np.where(self.orientation[:, None] == HORIZONTAL,
                        np.array([0.5 * self.W, 0.0]), np.array([0.0, 0.5 * self.W]))
        return np.stack([self.centers - half, self.centers + half], axis=1)

    def same_as(self, other: "SegmentGrid") -> bool:
        return (self.n == other.n and self.domain == other.domain)


def build_grid(domain: Domain, n: int) -> SegmentGrid:
    """Partition ``domain`` into ``n x n`` pixels and list their edges."""
    if int(n) != n or n < 1:
        raise GeometryError(f"pixels per side must be a positive integer, got {n}")
    n = int(n)
    W = domain.side / n
    x0, y0 = domain.lower_left

    # horizontal edges: rows j = 0..n, columns i = 0..n-1
    jh, ih = np.meshgrid(np.arange(n + 1), np.arange(n), indexing="ij")
    jh, ih = jh.ravel(), ih.ravel()
    ch = np.column_stack([x0 + (ih + 0.5) * W, y0 + jh * W])
    nh = np.column_stack([jh * (n + 1) + ih, jh * (n + 1) + ih + 1])

    # vertical edges: rows j = 0..n-1, columns i = 0..n
    jv, iv = np.meshgrid(np.arange(n), np.arange(n + 1), indexing="ij")
    jv, iv = jv.ravel(), iv.ravel()
    cv = np.column_stack([x0 + iv * W, y0 + (jv + 0.5) * W])
    nv = np.column_stack([jv * (n + 1) + iv, (jv + 1) * (n + 1) + iv])

    centers = np.vstack([ch, cv])
    orientation = np.concatenate([np.full(len(ch), HORIZONTAL, np.int8),
                                  np.full(len(cv), VERTICAL, np.int8)])
    nodes = np.vstack([nh, nv])
    for arr in (centers, orientation, nodes):
        arr.setflags(write=False)
    return SegmentGrid(domain, n, centers, orientation, nodes)


def edge_pixels(n: int) -> np.ndarray:
    """The two pixels on either side of every segment of an ``n x n`` grid.

    Pixels are numbered ``j * n + i`` (row ``j``, column ``i``); -1 stands
    for the outside of the domain. Returns an int array of shape (Q, 2).
    """
    n = int(n)
    jh, ih = np.meshgrid(np.arange(n + 1), np.arange(n), indexing="ij")
    jh, ih = jh.ravel(), ih.ravel()
    below = np.where(jh > 0, (jh - 1) * n + ih, -1)
    above = np.where(jh < n, jh * n + ih, -1)
    jv, iv = np.meshgrid(np.arange(n), np.arange(n + 1), indexing="ij")
    jv, iv = jv.ravel(), iv.ravel()
    left = np.where(iv > 0, jv * n + iv - 1, -1)
    right = np.where(iv < n, jv * n + iv, -1)
    return np.vstack([np.column_stack([below, above]), np.column_stack([left, right])])


def nearest_same_orientation(old_grid: SegmentGrid, new_grid: SegmentGrid) -> np.ndarray:
    """Index of the closest old segment of equal orientation, per new segment.

    Ties go to the lowest old index.
    """
    idx = np.empty(new_grid.Q, dtype=int)
    for o in (HORIZONTAL, VERTICAL):
        old_ids = np.flatnonzero(old_grid.orientation == o)
        new_ids = np.flatnonzero(new_grid.orientation == o)
        d2 = ((new_grid.centers[new_ids, None, :] - old_grid.centers[None, old_ids, :]) ** 2).sum(-1)
        # exact ties are rare but argmin already returns the first (lowest) index
        idx[new_ids] = old_ids[np.argmin(d2, axis=1)]
    return idx


def map_solution(old_grid: SegmentGrid, old_x, new_grid: SegmentGrid) -> np.ndarray:
    """Transfer per-segment values from one grid to another.

    Each new segment inherits the value of the nearest old segment with the
    same orientation. Works for real or complex arrays whose first axis is
    the segment index.
    """
    old_x = np.asarray(old_x)
    if old_x.shape[0] != old_grid.Q:
        raise GeometryError(f"expected {old_grid.Q} values, got {old_x.shape[0]}")
    if not old_grid.domain.contains_domain(new_grid.domain):
        raise GeometryError("new grid must lie inside the old grid's domain")
    if old_grid.same_as(new_grid):
        return old_x.copy()
    return old_x[nearest_same_orientation(old_grid, new_grid)].copy()
