"""Hierarchical quadrilateral/hexahedral meshes.

Cells live on refinement levels; each level stores its cells as a structure
of arrays (vertex indices, parent and child links, same-level neighbors,
boundary and manifold tags per face). Cells are handed out as lightweight
accessors that only carry ``(level, index)``.

Conventions
-----------
Reference-cell vertices are numbered lexicographically with x fastest, so
vertex ``j`` sits at ``((j >> 0) & 1, (j >> 1) & 1, ...)``. Face ``2a + s``
is the face normal to axis ``a`` at coordinate ``s``. Children follow the
same numbering as vertices: child ``c`` occupies the half-box at
``bits(c) / 2``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..errors import NotActive
from ..geometry.manifold import (
    FLAT_MANIFOLD_ID,
    FlatManifold,
    Manifold,
    blend_lattice,
)


def corner_bits(dim: int) -> np.ndarray:
    """``(2**dim, dim)`` table of reference corner coordinates."""
    return np.array([[(j >> a) & 1 for a in range(dim)] for j in range(2**dim)], dtype=np.int64)


def face_corners(dim: int, face: int) -> list[int]:
    """Local corner numbers of a face, in the face's own lexicographic order."""
    a, s = divmod(face, 2)
    return [j for j in range(2**dim) if (j >> a) & 1 == s]


class _Level:
    """Structure-of-arrays storage for the cells of one refinement level."""

    _fields = {
        "cells": ("nv", np.int64, -1),
        "parent": ((), np.int64, -1),
        "first_child": ((), np.int64, -1),
        "material": ((), np.int64, 0),
        "manifold": ((), np.int64, FLAT_MANIFOLD_ID),
        "neighbors": ("nf", np.int64, -1),
        "boundary": ("nf", np.int64, -1),
        "face_manifold": ("nf", np.int64, FLAT_MANIFOLD_ID),
        "refine_flag": ((), bool, False),
        "coarse": ((), np.int64, -1),
        "uv_lower": ("dim", float, 0.0),
    }

    def __init__(self, dim: int):
        self.dim = dim
        self.n = 0
        self._cap = 0
        self._shapes = {"nv": (2**dim,), "nf": (2 * dim,), "dim": (dim,)}
        self._data = {}
        for name, (shape, dtype, fill) in self._fields.items():
            shp = self._shapes.get(shape, ())
            self._data[name] = np.full((0,) + shp, fill, dtype=dtype)

    def append(self, count: int) -> int:
        """Reserve ``count`` new rows (default-filled); return the first index."""
        start = self.n
        if self.n + count > self._cap:
            cap = max(2 * self._cap, self.n + count, 8)
            for name, (shape, dtype, fill) in self._fields.items():
                old = self._data[name]
                new = np.full((cap,) + old.shape[1:], fill, dtype=dtype)
                new[: self.n] = old[: self.n]
                self._data[name] = new
            self._cap = cap
        self.n += count
        return start

    def __getattr__(self, name):
        data = self.__dict__.get("_data")
        if data is not None and name in data:
            return data[name][: self.n]
        raise AttributeError(name)


@dataclass(frozen=True)
class NeighborInfo:
    """Result of a neighbor query across one face.

    ``kind`` is ``"none"`` (boundary), ``"same_level"`` (the neighbor is on
    the same level; it may itself be refined) or ``"coarser"`` (the active
    neighbor is one level coarser and this cell's face is subface
    ``subface`` of the neighbor's face).
    """

    kind: str
    cell: "CellAccessor | None" = None
    subface: int | None = None
    neighbor_face: int | None = None


@dataclass(frozen=True)
class RefinementReport:
    n_new_cells: int
    n_flag_additions_for_balance: int


class FaceAccessor:
    """A (dim-1)-dimensional face seen from one of its cells."""

    def __init__(self, cell: "CellAccessor", face_no: int):
        self.cell = cell
        self.face_no = face_no

    @property
    def structdim(self) -> int:
        return self.cell.tria.dim - 1

    @property
    def _lev(self):
        return self.cell.tria.levels[self.cell.level]

    def at_boundary(self) -> bool:
        return bool(self._lev.boundary[self.cell.index, self.face_no] >= 0)

    @property
    def boundary_id(self) -> int | None:
        b = int(self._lev.boundary[self.cell.index, self.face_no])
        return b if b >= 0 else None

    @property
    def manifold_id(self) -> int:
        return int(self._lev.face_manifold[self.cell.index, self.face_no])

    @property
    def local_vertices(self) -> list[int]:
        return face_corners(self.cell.tria.dim, self.face_no)

    @property
    def vertex_indices(self) -> np.ndarray:
        return self.cell.vertex_indices[self.local_vertices]

    @property
    def vertices(self) -> np.ndarray:
        return self.cell.tria.vertices[self.vertex_indices]

    def center(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def __repr__(self):
        return f"FaceAccessor({self.cell!r}, {self.face_no})"


class CellAccessor:
    """Handle ``(level, index)`` into a triangulation.

    Valid as long as the triangulation is not refined; cheap to create.
    """

    __slots__ = ("tria", "level", "index")

    def __init__(self, tria: "Triangulation", level: int, index: int):
        self.tria = tria
        self.level = int(level)
        self.index = int(index)

    @property
    def _lev(self) -> _Level:
        return self.tria.levels[self.level]

    @property
    def id(self) -> tuple[int, int]:
        return (self.level, self.index)

    def __eq__(self, other):
        return (
            isinstance(other, CellAccessor)
            and other.tria is self.tria
            and other.level == self.level
            and other.index == self.index
        )

    def __hash__(self):
        return hash((id(self.tria), self.level, self.index))

    def __repr__(self):
        return f"CellAccessor(level={self.level}, index={self.index})"

    @property
    def vertex_indices(self) -> np.ndarray:
        return self._lev.cells[self.index]

    def vertex_index(self, i: int) -> int:
        return int(self._lev.cells[self.index, i])

    def vertex(self, i: int) -> np.ndarray:
        return self.tria.vertices[self.vertex_index(i)]

    @property
    def vertices(self) -> np.ndarray:
        return self.tria.vertices[self.vertex_indices]

    def center(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    @property
    def n_faces(self) -> int:
        return 2 * self.tria.dim

    def face(self, f: int) -> FaceAccessor:
        if not 0 <= f < 2 * self.tria.dim:
            raise IndexError(f"face {f} out of range")
        return FaceAccessor(self, f)

    def at_boundary(self) -> bool:
        return bool(np.any(self._lev.boundary[self.index] >= 0))

    @property
    def material_id(self) -> int:
        return int(self._lev.material[self.index])

    @property
    def manifold_id(self) -> int:
        return int(self._lev.manifold[self.index])

    @property
    def coarse_index(self) -> int:
        return int(self._lev.coarse[self.index])

    @property
    def chart_box(self) -> tuple[np.ndarray, float]:
        """Lower corner and edge length of this cell in its coarse ancestor's reference cell."""
        return self._lev.uv_lower[self.index].copy(), 0.5**self.level

    def is_active(self) -> bool:
        return bool(self._lev.first_child[self.index] < 0)

    def has_children(self) -> bool:
        return not self.is_active()

    @property
    def n_children(self) -> int:
        return 0 if self.is_active() else 2**self.tria.dim

    def child(self, i: int) -> "CellAccessor":
        first = int(self._lev.first_child[self.index])
        if first < 0:
            raise NotActive("cell has no children")
        if not 0 <= i < 2**self.tria.dim:
            raise IndexError(f"child {i} out of range")
        return CellAccessor(self.tria, self.level + 1, first + i)

    def children(self) -> list["CellAccessor"]:
        return [self.child(i) for i in range(self.n_children)]

    def parent(self) -> "CellAccessor | None":
        p = int(self._lev.parent[self.index])
        return None if p < 0 else CellAccessor(self.tria, self.level - 1, p)

    @property
    def child_number(self) -> int:
        """Position of this cell among its parent's children."""
        p = int(self._lev.parent[self.index])
        if p < 0:
            raise ValueError("coarse cells have no parent")
        return self.index - int(self.tria.levels[self.level - 1].first_child[p])

    @property
    def refine_flag(self) -> bool:
        return bool(self._lev.refine_flag[self.index])

    def set_refine_flag(self) -> None:
        if not self.is_active():
            raise NotActive(f"{self!r} is not active")
        self._lev.refine_flag[self.index] = True

    def clear_refine_flag(self) -> None:
        self._lev.refine_flag[self.index] = False

    def neighbor(self, f: int) -> NeighborInfo:
        return self.tria.neighbor(self, f)


class Triangulation:
    """Hierarchical mesh of ``dim``-dimensional quads/hexes.

    Built from a coarse mesh; refined isotropically (each flagged cell is
    replaced by ``2**dim`` children). Adjacent active cells never differ by
    more than one level across a face.
    """

    def __init__(self, dim: int, vertices, cells, *, boundary_ids=None, face_manifold_ids=None,
                 cell_manifold_ids=None, material_ids=None):
        if dim not in (1, 2, 3):
            raise ValueError(f"dimension {dim} not supported")
        self.dim = dim
        nv = 2**dim
        verts = np.asarray(vertices, dtype=float).reshape(-1, dim)
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, nv)
        if cells.size and (cells.min() < 0 or cells.max() >= len(verts)):
            raise ValueError("cell vertex index out of range")
        self._vertices = np.empty((max(8, 2 * len(verts)), dim))
        self._vertices[: len(verts)] = verts
        self._n_vertices = len(verts)
        self._manifolds: dict[int, Manifold] = {FLAT_MANIFOLD_ID: FlatManifold()}
        self._entity_vertex: dict[tuple, int] = {}
        self.levels: list[_Level] = [_Level(dim)]
        self.generation = 0

        lev = self.levels[0]
        n = len(cells)
        lev.append(n)
        lev.cells[:] = cells
        lev.coarse[:] = np.arange(n)
        if material_ids is not None:
            lev.material[:] = material_ids
        if cell_manifold_ids is not None:
            lev.manifold[:] = cell_manifold_ids

        # coarse-level neighbors through shared face vertex sets
        faces: dict[frozenset, tuple[int, int]] = {}
        for k in range(n):
            for f in range(2 * dim):
                key = frozenset(cells[k, face_corners(dim, f)].tolist())
                other = faces.pop(key, None)
                if other is None:
                    faces[key] = (k, f)
                else:
                    lev.neighbors[k, f] = other[0]
                    lev.neighbors[other[0], other[1]] = k
        boundary_ids = boundary_ids or {}
        for (k, f) in faces.values():
            lev.boundary[k, f] = boundary_ids.get((k, f), 0)
        for (k, f), b in boundary_ids.items():
            if lev.neighbors[k, f] >= 0:
                raise ValueError(f"boundary id given for interior face {(k, f)}")
        for (k, f), m in (face_manifold_ids or {}).items():
            lev.face_manifold[k, f] = m

    # ------------------------------------------------------------------ basics
    @property
    def vertices(self) -> np.ndarray:
        return self._vertices[: self._n_vertices]

    @property
    def n_vertices(self) -> int:
        return self._n_vertices

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def n_cells(self, level: int | None = None) -> int:
        if level is None:
            return sum(lev.n for lev in self.levels)
        return self.levels[level].n

    @property
    def n_active_cells(self) -> int:
        return int(sum(np.count_nonzero(lev.first_child < 0) for lev in self.levels))

    def cell(self, level: int, index: int) -> CellAccessor:
        if not 0 <= index < self.levels[level].n:
            raise IndexError(f"no cell {index} on level {level}")
        return CellAccessor(self, level, index)

    def active_cell_iterators(self) -> Iterator[CellAccessor]:
        for l, lev in enumerate(self.levels):
            for i in np.flatnonzero(lev.first_child < 0):
                yield CellAccessor(self, l, i)

    def active_cells(self) -> list[CellAccessor]:
        return list(self.active_cell_iterators())

    def cell_iterators_on_level(self, level: int) -> Iterator[CellAccessor]:
        for i in range(self.levels[level].n):
            yield CellAccessor(self, level, i)

    def __iter__(self):
        return self.active_cell_iterators()

    # --------------------------------------------------------------- manifolds
    def set_manifold(self, manifold_id: int, manifold: Manifold) -> None:
        if manifold_id == FLAT_MANIFOLD_ID:
            raise ValueError("the flat manifold id is reserved")
        self._manifolds[manifold_id] = manifold
        attach = getattr(manifold, "attach", None)
        if attach is not None:
            attach(self)
        self.generation += 1

    def get_manifold(self, manifold_id: int) -> Manifold:
        try:
            return self._manifolds[manifold_id]
        except KeyError:
            raise KeyError(f"no manifold registered under id {manifold_id}") from None

    # --------------------------------------------------------------- topology
    def neighbor(self, cell: CellAccessor, f: int) -> NeighborInfo:
        if not 0 <= f < 2 * self.dim:
            raise IndexError(f"face {f} out of range")
        lev = self.levels[cell.level]
        k = cell.index
        if lev.boundary[k, f] >= 0:
            return NeighborInfo("none")
        nb = int(lev.neighbors[k, f])
        if nb >= 0:
            return NeighborInfo("same_level", CellAccessor(self, cell.level, nb),
                                neighbor_face=self._matching_face(cell.level, k, f, nb))
        parent = int(lev.parent[k])
        plev = self.levels[cell.level - 1]
        coarse = int(plev.neighbors[parent, f])
        # this cell's position on the parent face gives the subface number
        a = f // 2
        c = k - int(plev.first_child[parent])
        bits = [(c >> b) & 1 for b in range(self.dim) if b != a]
        subface = sum(bit << i for i, bit in enumerate(bits))
        return NeighborInfo("coarser", CellAccessor(self, cell.level - 1, coarse), subface,
                            neighbor_face=self._matching_face(cell.level - 1, parent, f, coarse))

    def _matching_face(self, level: int, k: int, f: int, nb: int) -> int:
        cells = self.levels[level].cells
        key = set(cells[k, face_corners(self.dim, f)].tolist())
        for g in range(2 * self.dim):
            if set(cells[nb, face_corners(self.dim, g)].tolist()) == key:
                return g
        raise RuntimeError("neighbor does not share the face")

    def edge_manifold_id(self, level: int, k: int, faces) -> int:
        """Manifold of a 3d edge: the first curved face manifold among the faces meeting there."""
        lev = self.levels[level]
        for f in faces:
            m = int(lev.face_manifold[k, f])
            if m != FLAT_MANIFOLD_ID and not self._manifolds[m].has_chart:
                return m
        return FLAT_MANIFOLD_ID

    def entity_manifold_id(self, level: int, k: int, fixed_faces) -> int:
        """Manifold governing the sub-entity of cell k where the faces in ``fixed_faces`` meet.

        No fixed faces means the cell itself; one means a face.
        """
        if len(fixed_faces) == 0:
            return int(self.levels[level].manifold[k])
        if len(fixed_faces) == 1:
            return int(self.levels[level].face_manifold[k, fixed_faces[0]])
        return self.edge_manifold_id(level, k, fixed_faces)

    def is_globally_refined(self) -> bool:
        top = len(self.levels) - 1
        return all(np.all(lev.first_child >= 0) for lev in self.levels[:top])

    # ------------------------------------------------------------- refinement
    def refine_global(self, times: int = 1) -> None:
        for _ in range(times):
            for cell in self.active_cell_iterators():
                cell.set_refine_flag()
            self.execute_refinement()

    def _add_vertex(self, x) -> int:
        if self._n_vertices == len(self._vertices):
            grown = np.empty((2 * len(self._vertices), self.dim))
            grown[: self._n_vertices] = self.vertices
            self._vertices = grown
        self._vertices[self._n_vertices] = x
        self._n_vertices += 1
        return self._n_vertices - 1

    def _balance_flags(self) -> int:
        added = 0
        queue = [(l, int(i)) for l, lev in enumerate(self.levels)
                 for i in np.flatnonzero(lev.refine_flag)]
        while queue:
            l, k = queue.pop()
            lev = self.levels[l]
            for f in range(2 * self.dim):
                if lev.boundary[k, f] >= 0 or lev.neighbors[k, f] >= 0:
                    continue
                plev = self.levels[l - 1]
                nb = int(plev.neighbors[lev.parent[k], f])
                if not plev.refine_flag[nb]:
                    plev.refine_flag[nb] = True
                    added += 1
                    queue.append((l - 1, nb))
        return added

    def execute_refinement(self) -> RefinementReport:
        """Refine every flagged cell (plus cells needed for 2:1 balance)."""
        added = self._balance_flags()
        n_new = 0
        for l in range(len(self.levels)):
            lev = self.levels[l]
            flagged = np.flatnonzero(lev.refine_flag)
            if flagged.size == 0:
                continue
            if l + 1 == len(self.levels):
                self.levels.append(_Level(self.dim))
            for k in flagged:
                self._refine_cell(l, int(k))
                n_new += 2**self.dim
            lev.refine_flag[:] = False
        self.generation += 1
        return RefinementReport(n_new, added)

    def _entity_position(self, l: int, k: int, lattice_idx, lattice: dict) -> np.ndarray:
        """Position of the new vertex at 3^d lattice index ``lattice_idx`` of cell k."""
        dim = self.dim
        lev = self.levels[l]
        free = [a for a in range(dim) if lattice_idx[a] == 1]
        fixed = [a for a in range(dim) if lattice_idx[a] != 1]
        if len(free) == dim:
            mid = int(lev.manifold[k])
        elif len(free) == dim - 1:
            a = fixed[0]
            mid = int(lev.face_manifold[k, 2 * a + lattice_idx[a] // 2])
        else:
            mid = self.edge_manifold_id(l, k, [2 * a + lattice_idx[a] // 2 for a in fixed])
        man = self._manifolds[mid]
        # the sub-lattice spanned by the entity, with corners and lower-dimensional points known
        sub_ranges = [range(3) if a in free else [lattice_idx[a]] for a in range(dim)]
        sub_idx = list(itertools.product(*reversed(sub_ranges)))
        sub_idx = [tuple(reversed(s)) for s in sub_idx]
        corners = [s for s in sub_idx if all(s[a] != 1 for a in free)]
        corner_pts = np.array([lattice[s] for s in corners])
        if man.has_chart:
            uv = lev.uv_lower[k] + np.asarray(lattice_idx) * 0.5 ** (l + 1)
            return man.chart_point(int(lev.coarse[k]), uv)
        if isinstance(man, FlatManifold):
            avg = man.new_point(corner_pts, np.full(len(corners), 1.0 / len(corners)))
            if len(free) == 1 or self._sub_entities_straight(sub_idx, free, lattice, lattice_idx):
                return avg
            # curved sub-entities: blend them into the interior
            grid = np.array([avg if s == tuple(lattice_idx) else lattice[s] for s in sub_idx])
            grid = grid.reshape((3,) * len(free) + (dim,))
            # sub_idx enumerates free axes with the first one fastest; lattice axes are reversed
            blended = blend_lattice(grid, np.array([0.0, 0.5, 1.0]))
            return blended[(1,) * len(free)]
        return man.new_point(corner_pts, np.full(len(corners), 1.0 / len(corners)))

    @staticmethod
    def _sub_entities_straight(sub_idx, free, lattice, centre_idx) -> bool:
        for s in sub_idx:
            if s == tuple(centre_idx):
                continue
            sfree = [a for a in free if s[a] == 1]
            if not sfree:
                continue
            # corners of this sub-entity
            crn = [tuple(s[a] if a not in sfree else c[sfree.index(a)] for a in range(len(s)))
                   for c in itertools.product((0, 2), repeat=len(sfree))]
            pts = np.array([lattice[c] for c in crn])
            if not np.array_equal(lattice[s], FlatManifold().new_point(pts, np.full(len(crn), 1.0 / len(crn)))):
                return False
        return True

    def _refine_cell(self, l: int, k: int) -> None:
        dim = self.dim
        lev = self.levels[l]
        clev = self.levels[l + 1]
        parent_verts = lev.cells[k].copy()
        # lattice of 3^dim points; x fastest
        all_idx = [tuple(reversed(t)) for t in itertools.product(range(3), repeat=dim)]
        vid: dict[tuple, int] = {}
        pos: dict[tuple, np.ndarray] = {}
        for idx in all_idx:
            if all(i != 1 for i in idx):
                j = sum((idx[a] // 2) << a for a in range(dim))
                vid[idx] = int(parent_verts[j])
                pos[idx] = self.vertices[vid[idx]]
        for n_free in range(1, dim + 1):
            for idx in all_idx:
                free = [a for a in range(dim) if idx[a] == 1]
                if len(free) != n_free:
                    continue
                corner_ids = []
                for c in itertools.product((0, 2), repeat=n_free):
                    s = list(idx)
                    for a, v in zip(free, c):
                        s[a] = v
                    corner_ids.append(vid[tuple(s)])
                key = tuple(sorted(corner_ids))
                existing = self._entity_vertex.get(key) if n_free < dim else None
                if existing is None:
                    x = self._entity_position(l, k, idx, pos)
                    existing = self._add_vertex(x)
                    if n_free < dim:
                        self._entity_vertex[key] = existing
                vid[idx] = existing
                pos[idx] = self.vertices[existing]

        nchild = 2**dim
        first = clev.append(nchild)
        lev.first_child[k] = first
        bits = corner_bits(dim)
        for c in range(nchild):
            ci = first + c
            cb = bits[c]
            clev.cells[ci] = [vid[tuple(cb + bits[j])] for j in range(nchild)]
            clev.parent[ci] = k
            clev.material[ci] = lev.material[k]
            clev.manifold[ci] = lev.manifold[k]
            clev.coarse[ci] = lev.coarse[k]
            clev.uv_lower[ci] = lev.uv_lower[k] + cb * 0.5 ** (l + 1)
            for a in range(dim):
                for s in (0, 1):
                    f = 2 * a + s
                    if cb[a] == s:
                        clev.boundary[ci, f] = lev.boundary[k, f]
                        clev.face_manifold[ci, f] = lev.face_manifold[k, f]
                    else:
                        clev.face_manifold[ci, f] = lev.manifold[k]
                        clev.neighbors[ci, f] = first + (c ^ (1 << a))
        # link children across faces to already refined neighbors
        for f in range(2 * dim):
            nb = int(lev.neighbors[k, f])
            if nb < 0 or lev.first_child[nb] < 0:
                continue
            g = self._matching_face(l, k, f, nb)
            nfirst = int(lev.first_child[nb])
            a, s = divmod(f, 2)
            ga, gs = divmod(g, 2)
            theirs = {}
            for c in range(nchild):
                if (c >> ga) & 1 == gs:
                    key = frozenset(clev.cells[nfirst + c, face_corners(dim, g)].tolist())
                    theirs[key] = nfirst + c
            for c in range(nchild):
                if (c >> a) & 1 == s:
                    key = frozenset(clev.cells[first + c, face_corners(dim, f)].tolist())
                    other = theirs[key]
                    clev.neighbors[first + c, f] = other
                    clev.neighbors[other, g] = first + c
