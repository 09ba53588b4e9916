"""Maps from the reference cell ``[0,1]^d`` to mesh cells."""
from __future__ import annotations

import itertools

import numpy as np

from .fe import FiniteElementQ, gauss_lobatto_points, tensor_indices
from .geometry.manifold import FLAT_MANIFOLD_ID, FlatManifold, blend_lattice
from .grid.triangulation import CellAccessor, corner_bits


def _box(cell: CellAccessor):
    """``(lower, extent)`` if the cell is an axis-aligned box with flat geometry, else None."""
    tria = cell.tria
    lev = tria.levels[cell.level]
    if lev.manifold[cell.index] != FLAT_MANIFOLD_ID or np.any(lev.face_manifold[cell.index] != FLAT_MANIFOLD_ID):
        return None
    v = cell.vertices
    lower = v[0]
    extent = v[-1] - v[0]
    if np.any(extent <= 0):
        return None
    expected = lower + corner_bits(tria.dim) * extent
    scale = np.abs(v).max() + np.abs(extent).max()
    if np.max(np.abs(expected - v)) > 1e-14 * scale:
        return None
    return lower.copy(), extent


class MappingQ:
    """Degree-``m`` Lagrange mapping on Gauss-Lobatto support points.

    Support points come from the cell's manifolds: vertices for ``m = 1``;
    otherwise edge points from the edge's manifold with 1d Gauss-Lobatto
    weights, face and interior points from the corresponding manifold
    (transfinite charts are evaluated directly, flat entities are blended
    from their boundary points). Axis-aligned boxes with flat geometry take a
    diagonal-Jacobian fast path unless ``cartesian_fast_path`` is False.
    """

    def __init__(self, degree: int = 1, cartesian_fast_path: bool = True):
        if degree < 1:
            raise ValueError("mapping degree must be at least 1")
        self.degree = degree
        self.cartesian_fast_path = cartesian_fast_path
        self._cache: dict = {}
        self._cache_key = None
        self._fe = {}

    def __repr__(self):
        return f"MappingQ({self.degree})"

    def _basis(self, dim) -> FiniteElementQ:
        fe = self._fe.get(dim)
        if fe is None:
            fe = self._fe[dim] = _GenericQ(dim, self.degree)
        return fe

    def _cached(self, cell: CellAccessor):
        key = (id(cell.tria), cell.tria.generation)
        if key != self._cache_key:
            self._cache.clear()
            self._cache_key = key
        entry = self._cache.get(cell.id)
        if entry is None:
            box = _box(cell) if self.cartesian_fast_path else None
            entry = ("box", box) if box is not None else ("q", self.support_points(cell))
            self._cache[cell.id] = entry
        return entry

    def is_cartesian(self, cell: CellAccessor) -> bool:
        return self._cached(cell)[0] == "box"

    def cell_box(self, cell: CellAccessor):
        """``(lower, extent)`` when the fast path applies to ``cell``, else None."""
        kind, data = self._cached(cell)
        return data if kind == "box" else None

    def support_points(self, cell: CellAccessor) -> np.ndarray:
        """``((m+1)^d, d)`` support points in lexicographic order."""
        tria = cell.tria
        dim = tria.dim
        m = self.degree
        if m == 1:
            return cell.vertices.copy()
        t = gauss_lobatto_points(m + 1)
        lev = tria.levels[cell.level]
        k = cell.index
        # lattice axes are (z, y, x) so that reshape(-1, dim) is x-fastest
        lattice = np.full((m + 1,) * dim + (dim,), np.nan)
        verts = cell.vertices
        for j, bits in enumerate(corner_bits(dim)):
            lattice[tuple(bits[::-1] * m)] = verts[j]
        uv_lower, size = cell.chart_box
        for n_free in range(1, dim + 1):
            for free in itertools.combinations(range(dim), n_free):
                fixed = [a for a in range(dim) if a not in free]
                for sides in itertools.product((0, 1), repeat=len(fixed)):
                    faces = [2 * a + s for a, s in zip(fixed, sides)]
                    mid = tria.entity_manifold_id(cell.level, k, faces)
                    man = tria.get_manifold(mid)
                    self._fill_entity(lattice, t, free, dict(zip(fixed, sides)), man,
                                      uv_lower, size, int(lev.coarse[k]))
        return lattice.reshape(-1, dim)

    @staticmethod
    def _fill_entity(lattice, t, free, fixed, man, uv_lower, size, coarse):
        dim = lattice.ndim - 1
        m = len(t) - 1

        def index_of(ij):
            # ij: per-axis indices (x first) -> lattice index tuple
            return tuple(ij[::-1])

        def sub_slices():
            return tuple(slice(None) if a in free else fixed[a] * m for a in range(dim))[::-1]

        interior = [range(1, m) if a in free else [fixed[a] * m] for a in range(dim)]
        points = [tuple(p) for p in itertools.product(*interior)]
        if not points:
            return
        if man.has_chart:
            for ij in points:
                uv = uv_lower + size * t[list(ij)]
                lattice[index_of(ij)] = man.chart_point(coarse, uv)
            return
        if isinstance(man, FlatManifold) and len(free) > 1:
            sl = sub_slices()
            lattice[sl] = blend_lattice(lattice[sl], t)
            return
        corner_ranges = [(0, m) if a in free else [fixed[a] * m] for a in range(dim)]
        corners = [tuple(c) for c in itertools.product(*corner_ranges)]
        corner_pts = np.array([lattice[index_of(c)] for c in corners])
        for ij in points:
            w = np.ones(len(corners))
            for ci, c in enumerate(corners):
                for a in free:
                    w[ci] *= t[ij[a]] if c[a] == m else 1.0 - t[ij[a]]
            lattice[index_of(ij)] = man.new_point(corner_pts, w)

    # ------------------------------------------------------------ evaluation
    def reference_tables(self, dim: int, points) -> tuple[np.ndarray, np.ndarray]:
        return self._basis(dim).tabulate(points)

    def cell_geometry(self, cell: CellAccessor, points, tables=None):
        """Real points ``(n, d)`` and Jacobians ``(n, d, d)`` at reference ``points``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        kind, data = self._cached(cell)
        if kind == "box":
            lower, extent = data
            x = lower + pts * extent
            jac = np.zeros((len(pts), cell.tria.dim, cell.tria.dim))
            idx = np.arange(cell.tria.dim)
            jac[:, idx, idx] = extent
            return x, jac
        psi, dpsi = tables if tables is not None else self.reference_tables(cell.tria.dim, pts)
        x = psi.T @ data
        jac = np.einsum("ki,kqj->qij", data, dpsi)
        return x, jac

    def transform_unit_to_real(self, cell: CellAccessor, x_hat) -> np.ndarray:
        x_hat = np.asarray(x_hat, dtype=float)
        x, _ = self.cell_geometry(cell, x_hat.reshape(-1, cell.tria.dim))
        return x.reshape(x_hat.shape)

    def jacobian(self, cell: CellAccessor, x_hat) -> np.ndarray:
        x_hat = np.asarray(x_hat, dtype=float)
        _, jac = self.cell_geometry(cell, x_hat.reshape(-1, cell.tria.dim))
        return jac[0] if x_hat.ndim == 1 else jac


class MappingCartesian(MappingQ):
    """Mapping restricted to axis-parallel boxes; Jacobians are diagonal."""

    def __init__(self):
        super().__init__(1, cartesian_fast_path=True)

    def _cached(self, cell):
        entry = super()._cached(cell)
        if entry[0] != "box":
            raise ValueError(f"{cell!r} is not an axis-aligned box")
        return entry


class _GenericQ(FiniteElementQ):
    """Lagrange basis on Gauss-Lobatto points without the element degree cap."""

    def __init__(self, dim, degree):
        from .fe import LagrangeBasis1D

        self.dim = dim
        self.degree = degree
        self.nodes_1d = gauss_lobatto_points(degree + 1)
        self.basis_1d = LagrangeBasis1D(self.nodes_1d)
        self.dofs_per_cell = (degree + 1) ** dim
        self.multi_indices = tensor_indices(degree + 1, dim)
        self.unit_support_points = self.nodes_1d[self.multi_indices]
