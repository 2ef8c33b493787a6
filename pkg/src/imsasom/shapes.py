"""Analytic PEC target shapes.

A shape is a set of closed contours. Polygonal shapes keep their vertex
lists; circles are kept exact so that distances to the contour are exact
as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import GeometryError

SHAPE_KINDS = ("empty", "square", "circle", "tshape", "diamond", "two_circles", "polyline")


@dataclass(frozen=True)
class ShapeSpec:
    """Geometric description of the PEC scatterer(s).

    Lengths are in meters. Which parameters are used depends on ``kind``:

    - ``square``: ``side``
    - ``circle``: ``radius``
    - ``tshape``: ``side`` (larger edge; bar and stem are ``side / 3`` thick)
    - ``diamond``: ``diagonal`` (square rotated by 45 degrees)
    - ``two_circles``: ``radius`` and ``gap`` (distance between boundaries),
      centers placed symmetrically along x
    - ``polyline``: ``vertices`` of one closed polygon, relative to ``center``
    - ``empty``: no scatterer
    """

    kind: str
    center: Tuple[float, float] = (0.0, 0.0)
    side: Optional[float] = None
    radius: Optional[float] = None
    diagonal: Optional[float] = None
    gap: Optional[float] = None
    vertices: Optional[Tuple[Tuple[float, float], ...]] = field(default=None)

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise GeometryError(f"unknown shape kind {self.kind!r}")
        required = {
            "square": ("side",), "tshape": ("side",), "circle": ("radius",),
            "diamond": ("diagonal",), "two_circles": ("radius", "gap"),
        }.get(self.kind, ())
        for name in required:
            value = getattr(self, name)
            if value is None or not value > 0:
                raise GeometryError(f"{self.kind} needs a positive {name}")
        if self.kind == "polyline":
            if self.vertices is None or len(self.vertices) < 3:
                raise GeometryError("polyline needs at least 3 vertices")
            object.__setattr__(self, "vertices",
                               tuple((float(a), float(b)) for a, b in self.vertices))
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    # -- geometry ---------------------------------------------------------

    def polygons(self) -> List[np.ndarray]:
        """Closed polygons (vertex arrays, counter-clockwise) of polygonal shapes."""
        c = np.array(self.center)
        if self.kind == "square":
            h = 0.5 * self.side
            return [c + np.array([[-h, -h], [h, -h], [h, h], [-h, h]])]
        if self.kind == "diamond":
            h = 0.5 * self.diagonal
            return [c + np.array([[0, -h], [h, 0], [0, h], [-h, 0]])]
        if self.kind == "tshape":
            L = self.side
            t = L / 3.0
            # bounding box [-L/2, L/2]^2; bar on top, stem centered below it
            v = np.array([
                [-t / 2, -L / 2], [t / 2, -L / 2], [t / 2, L / 2 - t], [L / 2, L / 2 - t],
                [L / 2, L / 2], [-L / 2, L / 2], [-L / 2, L / 2 - t], [-t / 2, L / 2 - t],
            ])
            return [c + v]
        if self.kind == "polyline":
            return [c + np.array(self.vertices)]
        return []

    def circles(self) -> List[Tuple[np.ndarray, float]]:
        c = np.array(self.center)
        if self.kind == "circle":
            return [(c, self.radius)]
        if self.kind == "two_circles":
            off = self.radius + 0.5 * self.gap
            return [(c + [-off, 0.0], self.radius), (c + [off, 0.0], self.radius)]
        return []

    def bounding_box(self) -> Tuple[float, float, float, float]:
        pts = [p for p in self.polygons()]
        for c, r in self.circles():
            pts.append(np.array([c - r, c + r]))
        if not pts:
            cx, cy = self.center
            return (cx, cy, cx, cy)
        allp = np.vstack(pts)
        return (allp[:, 0].min(), allp[:, 1].min(), allp[:, 0].max(), allp[:, 1].max())

    def is_empty(self) -> bool:
        return self.kind == "empty"

    def distance_to_contour(self, points) -> np.ndarray:
        """Euclidean distance from each point to the nearest contour."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.full(len(p), np.inf)
        for poly in self.polygons():
            a = poly
            b = np.roll(poly, -1, axis=0)
            ab = b - a
            ap = p[:, None, :] - a[None, :, :]
            t = np.clip((ap * ab).sum(-1) / (ab * ab).sum(-1), 0.0, 1.0)
            proj = a[None] + t[..., None] * ab[None]
            d = np.minimum(d, np.sqrt(((p[:, None, :] - proj) ** 2).sum(-1)).min(axis=1))
        for c, r in self.circles():
            d = np.minimum(d, np.abs(np.hypot(*(p - c).T) - r))
        return d

    def contains(self, points) -> np.ndarray:
        """Mask of points strictly inside any closed contour (even-odd rule)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.zeros(len(p), dtype=bool)
        for poly in self.polygons():
            a = poly
            b = np.roll(poly, -1, axis=0)
            px, py = p[:, 0:1], p[:, 1:2]
            crosses = (a[None, :, 1] > py) != (b[None, :, 1] > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = a[None, :, 0] + (py - a[None, :, 1]) * (b[None, :, 0] - a[None, :, 0]) \
                    / (b[None, :, 1] - a[None, :, 1])
            inside |= (np.count_nonzero(crosses & (px < xint), axis=1) % 2) == 1
        for c, r in self.circles():
            inside |= np.hypot(*(p - c).T) < r
        return inside

    def discretize(self, max_length: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Split every contour into straight pieces no longer than ``max_length``.

        Returns
        -------
        starts, ends : ndarray, shape (N, 2)
            End points of each piece.
        lengths : ndarray, shape (N,)
        """
        starts, ends = [], []
        for poly in self.polygons():
            nxt = np.roll(poly, -1, axis=0)
            for a, b in zip(poly, nxt):
                k = max(1, int(np.ceil(np.hypot(*(b - a)) / max_length - 1e-9)))
                t = np.linspace(0.0, 1.0, k + 1)[:, None]
                pts = a + t * (b - a)
                starts.append(pts[:-1])
                ends.append(pts[1:])
        for c, r in self.circles():
            # chord length 2 r sin(pi / k) <= max_length
            k = max(8, int(np.ceil(np.pi / np.arcsin(min(1.0, max_length / (2 * r))))))
            th = np.linspace(0.0, 2 * np.pi, k + 1)
            pts = c + r * np.column_stack([np.cos(th), np.sin(th)])
            starts.append(pts[:-1])
            ends.append(pts[1:])
        if not starts:
            empty = np.zeros((0, 2))
            return empty, empty.copy(), np.zeros(0)
        s, e = np.vstack(starts), np.vstack(ends)
        return s, e, np.hypot(*(e - s).T)


def shape_from_dict(d: dict) -> ShapeSpec:
    d = dict(d)
    if "vertices" in d and d["vertices"] is not None:
        d["vertices"] = tuple(tuple(v) for v in d["vertices"])
    if "center" in d:
        d["center"] = tuple(d["center"])
    return ShapeSpec(**d)


def shape_to_dict(shape: ShapeSpec) -> dict:
    out = {"kind": shape.kind, "center": list(shape.center)}
    for name in ("side", "radius", "diagonal", "gap"):
        if getattr(shape, name) is not None:
            out[name] = getattr(shape, name)
    if shape.vertices is not None:
        out["vertices"] = [list(v) for v in shape.vertices]
    return out


def rectangle(width: float, height: float, center: Sequence[float] = (0.0, 0.0)) -> ShapeSpec:
    """Axis-aligned rectangle expressed as a polyline."""
    w, h = 0.5 * width, 0.5 * height
    return ShapeSpec("polyline", center=tuple(center),
                     vertices=((-w, -h), (w, -h), (w, h), (-w, h)))
