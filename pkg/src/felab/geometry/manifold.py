"""Geometry descriptions used to place new points on refinement and mapping.

A manifold answers one question: given some existing points and weights,
where does their "average" lie? Flat space uses the affine average; the
polar manifold averages radius and direction separately, so points created
on a circle (or sphere) stay on it. Transfinite interpolation extends the
edge curves of a coarse quadrilateral into its interior via the Gordon-Hall
blend.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ChartError, DegenerateDirection, WeightError

# Distinguished tag of the default (straight) geometry.
FLAT_MANIFOLD_ID = 2**32 - 1

WEIGHT_TOL = 1e-10
DIRECTION_TOL = 1e-10


def _check_inputs(points, weights) -> tuple[np.ndarray, np.ndarray]:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size == 0 or pts.shape[0] != w.size:
        raise WeightError(f"{pts.shape[0]} points but {w.size} weights")
    if not np.all(np.isfinite(w)):
        raise WeightError("weights must be finite")
    if abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise WeightError(f"weights sum to {w.sum():.17g}, expected 1")
    return pts, w


class Manifold:
    """Interface: ``new_point`` plus a curve between two points."""

    has_chart = False

    def new_point(self, points: Sequence, weights: Sequence[float]) -> np.ndarray:
        pts, w = _check_inputs(points, weights)
        nz = np.flatnonzero(w)
        if nz.size == 1:
            # a single point with weight one is returned untouched
            return pts[nz[0]].copy()
        return self._average(pts, w)

    def _average(self, pts: np.ndarray, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def intermediate_point(self, p0, p1, t: float) -> np.ndarray:
        """Point at parameter ``t`` on the curve from ``p0`` (t=0) to ``p1`` (t=1)."""
        if t == 0.0:
            return np.array(p0, dtype=float)
        if t == 1.0:
            return np.array(p1, dtype=float)
        return self.new_point([p0, p1], [1.0 - t, t])


class FlatManifold(Manifold):
    def _average(self, pts, w):
        return w @ pts


class PolarManifold(Manifold):
    """Circle (2d) or sphere (3d) about ``center``.

    Radius and direction are averaged separately: the radius is the weighted
    mean of input radii, the direction the normalized weighted mean of unit
    directions. Input points must span less than a half turn.
    """

    def __init__(self, center):
        self.center = np.array(center, dtype=float)

    def _polar(self, pts):
        rel = pts - self.center
        r = np.linalg.norm(rel, axis=1)
        if np.any(r <= DIRECTION_TOL):
            raise DegenerateDirection("input point coincides with the polar center")
        return r, rel / r[:, None]

    def _average(self, pts, w):
        r, dirs = self._polar(pts)
        avg = w @ dirs
        n = np.linalg.norm(avg)
        if n < DIRECTION_TOL:
            raise DegenerateDirection(f"weighted direction average has norm {n:.3e}")
        return self.center + (w @ r) * avg / n

    def intermediate_point(self, p0, p1, t):
        # great-circle interpolation with linear radius; agrees with
        # new_point at t = 1/2 so dyadic refinement stays on the curve
        if t == 0.0:
            return np.array(p0, dtype=float)
        if t == 1.0:
            return np.array(p1, dtype=float)
        r, dirs = self._polar(np.array([p0, p1], dtype=float))
        cos_angle = np.clip(dirs[0] @ dirs[1], -1.0, 1.0)
        angle = np.arccos(cos_angle)
        if angle < 1e-14:
            u = dirs[0]
        else:
            if np.pi - angle < DIRECTION_TOL:
                raise DegenerateDirection("antipodal points have no unique arc")
            s = np.sin(angle)
            u = (np.sin((1 - t) * angle) * dirs[0] + np.sin(t * angle) * dirs[1]) / s
        return self.center + ((1 - t) * r[0] + t * r[1]) * u


class TransfiniteChart:
    """Gordon-Hall map of the unit square bounded by four edge curves.

    ``corners`` are P00, P10, P01, P11 in lexicographic order. ``south`` and
    ``north`` are parametrized by u (edges v=0 and v=1), ``west`` and
    ``east`` by v (edges u=0 and u=1). Each curve must return its end
    points exactly at parameters 0 and 1.
    """

    def __init__(self, corners, south: Callable, north: Callable, west: Callable, east: Callable):
        self.corners = np.array(corners, dtype=float)
        if self.corners.shape[0] != 4:
            raise ValueError("a 2d chart needs four corners")
        self.south, self.north, self.west, self.east = south, north, west, east

    def point(self, uv) -> np.ndarray:
        u, v = (float(c) for c in uv)
        if min(u, v) < -1e-10 or max(u, v) > 1 + 1e-10:
            raise ChartError(f"chart coordinates {uv} outside the unit square")
        u = min(max(u, 0.0), 1.0)
        v = min(max(v, 0.0), 1.0)
        p00, p10, p01, p11 = self.corners
        edges = (
            (1 - v) * np.asarray(self.south(u))
            + v * np.asarray(self.north(u))
            + (1 - u) * np.asarray(self.west(v))
            + u * np.asarray(self.east(v))
        )
        bilinear = (1 - u) * (1 - v) * p00 + u * (1 - v) * p10 + (1 - u) * v * p01 + u * v * p11
        return edges - bilinear


def transfinite_new_point(chart: TransfiniteChart, uv) -> np.ndarray:
    return chart.point(uv)


def straight_curve(p0, p1):
    p0 = np.array(p0, dtype=float)
    p1 = np.array(p1, dtype=float)

    def curve(t):
        if t == 0.0:
            return p0
        if t == 1.0:
            return p1
        return (1 - t) * p0 + t * p1

    return curve


class TransfiniteInterpolationManifold(Manifold):
    """Chart-per-coarse-cell transfinite interpolation (2d).

    Points are placed through :meth:`chart_point` with the chart coordinates
    of the coarse ancestor; the triangulation tracks those coordinates
    exactly since children split the chart dyadically. Plain
    :meth:`new_point` has no chart context and falls back to the affine
    average.
    """

    has_chart = True

    def __init__(self):
        self._tria = None
        self._charts: dict[int, TransfiniteChart] = {}

    def attach(self, triangulation) -> None:
        if triangulation.dim != 2:
            raise NotImplementedError("transfinite interpolation is only available in 2d")
        self._tria = triangulation
        self._charts.clear()

    def _average(self, pts, w):
        return w @ pts

    def chart(self, coarse_index: int) -> TransfiniteChart:
        chart = self._charts.get(coarse_index)
        if chart is None:
            chart = self._charts[coarse_index] = self._build_chart(coarse_index)
        return chart

    def _build_chart(self, k: int) -> TransfiniteChart:
        tria = self._tria
        if tria is None:
            raise ChartError("manifold is not attached to a triangulation")
        verts = tria.vertices[tria.levels[0].cells[k]]

        def edge(face, a, b):
            man = tria.get_manifold(int(tria.levels[0].face_manifold[k, face]))
            if man.has_chart or isinstance(man, FlatManifold):
                return straight_curve(verts[a], verts[b])
            pa, pb = verts[a].copy(), verts[b].copy()
            return lambda t: man.intermediate_point(pa, pb, t)

        # faces: 0 x-, 1 x+, 2 y-, 3 y+
        return TransfiniteChart(
            verts,
            south=edge(2, 0, 1),
            north=edge(3, 2, 3),
            west=edge(0, 0, 2),
            east=edge(1, 1, 3),
        )

    def chart_point(self, coarse_index: int, uv) -> np.ndarray:
        return self.chart(coarse_index).point(uv)


def blend_lattice(lattice: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Fill the interior of a k-dimensional point lattice from its boundary.

    ``lattice`` has shape ``(n,)*k + (dim,)``; only the entries on the
    boundary of the index box are read. Interior entries are the boolean sum
    of linear interpolation in each direction (Gordon-Hall blending), which
    reproduces multilinear lattices exactly.
    """
    lattice = np.asarray(lattice, dtype=float)
    k = lattice.ndim - 1
    n = lattice.shape[0]
    out = np.zeros_like(lattice)
    for mask in range(1, 2**k):
        axes = [a for a in range(k) if mask >> a & 1]
        term = lattice
        for a in axes:
            lo = np.take(term, [0], axis=a)
            hi = np.take(term, [n - 1], axis=a)
            shape = [1] * (k + 1)
            shape[a] = n
            tt = t.reshape(shape)
            term = (1 - tt) * lo + tt * hi
        out += (-1) ** (len(axes) + 1) * term
    interior = tuple(slice(1, n - 1) for _ in range(k))
    result = lattice.copy()
    result[interior] = out[interior]
    return result
