"""Global numbering of degrees of freedom and affine constraints on them."""
from __future__ import annotations

from collections import defaultdict

import numpy as np
import scipy.sparse as sp

from .errors import NotActive, NotDistributed
from .fe import FiniteElementQ
from .functions import as_function
from .grid.triangulation import CellAccessor, Triangulation, corner_bits, face_corners
from .mapping import MappingQ


def _node_weights(fe: FiniteElementQ) -> list[list[tuple[int, int]]]:
    """Per local node, the integer "multilinear weight" of each cell corner.

    A node with tensor index ``k`` gets weight ``prod_a (k_a if corner bit a
    else p - k_a)`` on each corner. Restricted to the corners with nonzero
    weight this identifies the node on its vertex/edge/face/cell entity
    independently of the orientation in which a neighbor sees it.
    """
    p = fe.degree
    bits = corner_bits(fe.dim)
    table = []
    for k in fe.multi_indices:
        row = []
        for j, b in enumerate(bits):
            w = int(np.prod([k[a] if b[a] else p - k[a] for a in range(fe.dim)]))
            if w:
                row.append((j, w))
        table.append(row)
    return table


class DoFHandler:
    """Enumerates the degrees of freedom of ``fe`` on a set of cells.

    By default the cells are the active cells; pass ``level`` to number the
    continuous space on all cells of one refinement level instead (used by
    multigrid). Entities shared between cells (vertices, edges, faces) get
    one set of indices; numbering follows the first cell that touches an
    entity, in cell iteration order.
    """

    def __init__(self, tria: Triangulation, fe: FiniteElementQ | None = None, level: int | None = None):
        self.tria = tria
        self.fe = fe
        self.level = level
        self._cell_dofs = None
        if fe is not None:
            self.distribute_dofs(fe)

    def distribute_dofs(self, fe: FiniteElementQ) -> int:
        if fe.dim != self.tria.dim:
            raise ValueError("element and mesh dimensions differ")
        self.fe = fe
        if self.level is None:
            cells = self.tria.active_cells()
        else:
            cells = list(self.tria.cell_iterators_on_level(self.level))
        weights = _node_weights(fe)
        numbers: dict[tuple, int] = {}
        table = np.empty((len(cells), fe.dofs_per_cell), dtype=np.int64)
        for r, cell in enumerate(cells):
            vids = cell.vertex_indices.tolist()
            for i, row in enumerate(weights):
                key = tuple(sorted((vids[j], w) for j, w in row))
                n = numbers.get(key)
                if n is None:
                    n = numbers[key] = len(numbers)
                table[r, i] = n
        self.cells = cells
        self._row = {c.id: r for r, c in enumerate(cells)}
        self._cell_dofs = table
        self._generation = self.tria.generation
        self.n_dofs = len(numbers)
        return self.n_dofs

    def _check(self):
        if self._cell_dofs is None:
            raise NotDistributed("distribute_dofs() has not been called")
        if self.tria.generation != self._generation:
            raise NotDistributed("mesh changed since dofs were distributed")

    @property
    def cell_dofs(self) -> np.ndarray:
        """``(n_cells, dofs_per_cell)`` table, rows in cell order."""
        self._check()
        return self._cell_dofs

    @property
    def n_cells(self) -> int:
        self._check()
        return len(self.cells)

    def row_of(self, cell: CellAccessor) -> int:
        self._check()
        try:
            return self._row[cell.id]
        except KeyError:
            if self.level is None and not cell.is_active():
                raise NotActive(f"{cell!r} is not active") from None
            raise KeyError(f"{cell!r} is not handled by this DoFHandler") from None

    def cell_dof_indices(self, cell: CellAccessor) -> np.ndarray:
        return self._cell_dofs[self.row_of(cell)].copy()

    def face_nodes(self, face: int) -> np.ndarray:
        """Local node numbers on reference face ``face``, in face-lexicographic order."""
        a, s = divmod(face, 2)
        return np.flatnonzero(self.fe.multi_indices[:, a] == s * self.fe.degree)

    def support_points(self, mapping: MappingQ | None = None) -> np.ndarray:
        self._check()
        mapping = mapping or MappingQ(1)
        pts = np.empty((self.n_dofs, self.tria.dim))
        ref = self.fe.unit_support_points
        tables = mapping.reference_tables(self.tria.dim, ref)
        for r, cell in enumerate(self.cells):
            x, _ = mapping.cell_geometry(cell, ref, tables)
            pts[self._cell_dofs[r]] = x
        return pts

    def vertex_dofs(self) -> np.ndarray:
        """Degree of freedom sitting at each mesh vertex (-1 for unused vertices)."""
        self._check()
        out = np.full(self.tria.n_vertices, -1, dtype=np.int64)
        p = self.fe.degree
        corner_nodes = [int(np.dot(b * p, (p + 1) ** np.arange(self.tria.dim)))
                        for b in corner_bits(self.tria.dim)]
        for r, cell in enumerate(self.cells):
            out[cell.vertex_indices] = self._cell_dofs[r, corner_nodes]
        return out


class AffineConstraints:
    """Constraints ``x_i = sum_j c_ij x_j + g_i`` on global indices.

    Lines are collected with :meth:`add_line`/:meth:`add_entry`/
    :meth:`set_inhomogeneity`; :meth:`close` substitutes chains so that no
    constrained index appears on any right-hand side.
    """

    def __init__(self):
        self._lines: dict[int, list[tuple[int, float]]] = {}
        self._inhom: dict[int, float] = {}
        self.closed = False

    # ------------------------------------------------------------- building
    def add_line(self, i: int) -> None:
        if self.closed:
            raise RuntimeError("constraints are closed")
        self._lines.setdefault(int(i), [])
        self._inhom.setdefault(int(i), 0.0)

    def add_entry(self, i: int, j: int, c: float) -> None:
        if int(i) == int(j):
            raise ValueError("a constraint cannot reference itself")
        self.add_line(i)
        self._lines[int(i)].append((int(j), float(c)))

    def set_inhomogeneity(self, i: int, value: float) -> None:
        self.add_line(i)
        self._inhom[int(i)] = float(value)

    def is_constrained(self, i: int) -> bool:
        return int(i) in self._lines

    def __contains__(self, i):
        return self.is_constrained(i)

    def __len__(self):
        return len(self._lines)

    @property
    def n_constraints(self) -> int:
        return len(self._lines)

    def constrained_dofs(self) -> np.ndarray:
        return np.array(sorted(self._lines), dtype=np.int64)

    def line(self, i: int) -> tuple[list[tuple[int, float]], float]:
        return list(self._lines[int(i)]), self._inhom[int(i)]

    def is_inhomogeneous(self) -> bool:
        return any(v != 0.0 for v in self._inhom.values())

    def merge(self, other: "AffineConstraints") -> None:
        """Add lines from ``other`` for indices not yet constrained here."""
        for i, entries in other._lines.items():
            if i not in self._lines:
                self._lines[i] = list(entries)
                self._inhom[i] = other._inhom[i]

    def close(self) -> "AffineConstraints":
        if self.closed:
            return self
        resolved: dict[int, tuple[dict[int, float], float]] = {}

        def resolve(i, stack):
            if i in resolved:
                return resolved[i]
            if i in stack:
                raise ValueError(f"cyclic constraint through index {i}")
            stack.add(i)
            acc: dict[int, float] = defaultdict(float)
            inhom = self._inhom[i]
            for j, c in self._lines[i]:
                if j in self._lines:
                    sub, g = resolve(j, stack)
                    for k, ck in sub.items():
                        acc[k] += c * ck
                    inhom += c * g
                else:
                    acc[j] += c
            stack.discard(i)
            resolved[i] = (dict(acc), inhom)
            return resolved[i]

        for i in list(self._lines):
            resolve(i, set())
        self._lines = {i: sorted(entries.items()) for i, (entries, _) in resolved.items()}
        self._inhom = {i: g for i, (_, g) in resolved.items()}
        self.closed = True
        self._build_arrays()
        return self

    def _build_arrays(self):
        rows = self.constrained_dofs()
        ptr = [0]
        cols, vals = [], []
        for i in rows:
            for j, c in self._lines[int(i)]:
                cols.append(j)
                vals.append(c)
            ptr.append(len(cols))
        self._rows = rows
        self._ptr = np.array(ptr, dtype=np.int64)
        self._cols = np.array(cols, dtype=np.int64)
        self._vals = np.array(vals, dtype=float)
        self._g = np.array([self._inhom[int(i)] for i in rows], dtype=float)
        self._entry_row = np.repeat(np.arange(len(rows)), np.diff(self._ptr))

    def _require_closed(self):
        if not self.closed:
            raise RuntimeError("call close() first")

    # ------------------------------------------------------------ applying
    def constrained_mask(self, n: int) -> np.ndarray:
        mask = np.zeros(n, dtype=bool)
        if self._lines:
            mask[self.constrained_dofs()] = True
        return mask

    def distribute(self, x: np.ndarray) -> None:
        """Overwrite constrained entries of ``x`` with their constraint values."""
        self._require_closed()
        if len(self._rows) == 0:
            return
        contrib = np.bincount(self._entry_row, weights=self._vals * x[self._cols],
                              minlength=len(self._rows))
        x[self._rows] = contrib + self._g

    def set_zero(self, x: np.ndarray) -> None:
        if self._lines:
            x[self.constrained_dofs()] = 0.0

    def expansion(self, n: int) -> tuple[sp.csr_matrix, np.ndarray]:
        """``(C, k)`` with ``x = C y + k`` for any vector ``y`` of free values.

        Columns of constrained indices are zero.
        """
        self._require_closed()
        mask = self.constrained_mask(n)
        free = np.flatnonzero(~mask)
        rows = np.concatenate([free, self._rows[self._entry_row]])
        cols = np.concatenate([free, self._cols])
        vals = np.concatenate([np.ones(len(free)), self._vals])
        C = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        k = np.zeros(n)
        k[self._rows] = self._g
        return C, k

    def resolve_local(self, dofs: np.ndarray):
        """Local expansion of a cell's indices.

        Returns ``(targets, E, k)`` such that the local values are
        ``E @ x[targets] + k``.
        """
        self._require_closed()
        targets: dict[int, int] = {}
        entries = []
        k = np.zeros(len(dofs))
        for i, d in enumerate(dofs):
            d = int(d)
            line = self._lines.get(d)
            if line is None:
                entries.append((i, targets.setdefault(d, len(targets)), 1.0))
            else:
                for j, c in line:
                    entries.append((i, targets.setdefault(j, len(targets)), c))
                k[i] = self._inhom[d]
        E = np.zeros((len(dofs), len(targets)))
        for i, t, c in entries:
            E[i, t] += c
        return np.fromiter(targets, dtype=np.int64, count=len(targets)), E, k

    def distribute_local_to_global(self, local_matrix, local_rhs, dof_indices, global_matrix=None,
                                   global_rhs=None) -> None:
        """Scatter cell contributions, eliminating constrained indices on the fly.

        Contributions to a constrained row or column are redistributed to the
        indices it depends on; inhomogeneities move to the right-hand side;
        each constrained diagonal receives the mean absolute local diagonal
        so the matrix stays non-singular.
        """
        self._require_closed()
        dofs = np.asarray(dof_indices, dtype=np.int64)
        L = None if local_matrix is None else np.asarray(local_matrix, dtype=float)
        b = None if local_rhs is None else np.asarray(local_rhs, dtype=float)
        constrained = [i for i, d in enumerate(dofs) if int(d) in self._lines]
        if not constrained:
            if global_matrix is not None:
                global_matrix.add_block(dofs, dofs, L)
            if global_rhs is not None:
                np.add.at(global_rhs, dofs, b)
            return
        targets, E, k = self.resolve_local(dofs)
        if global_matrix is not None:
            global_matrix.add_block(targets, targets, E.T @ L @ E)
            diag = np.abs(np.diag(L)).mean()
            for i in constrained:
                global_matrix.add_block(dofs[i:i + 1], dofs[i:i + 1], np.array([[diag]]))
        if global_rhs is not None:
            rhs = b if b is not None else np.zeros(len(dofs))
            if L is not None and np.any(k):
                rhs = rhs - L @ k
            np.add.at(global_rhs, targets, E.T @ rhs)


def distribute_local_to_global(constraints, local_matrix, local_rhs, dof_indices, global_matrix, global_rhs):
    constraints.distribute_local_to_global(local_matrix, local_rhs, dof_indices, global_matrix, global_rhs)


def constraints_distribute(constraints: AffineConstraints, x: np.ndarray) -> None:
    constraints.distribute(x)


def _face_map(tria: Triangulation, level: int, k: int, f: int, nb: int, g: int):
    """Affine map of face coordinates of face f of cell k to those of face g of cell nb."""
    dim = tria.dim
    cells = tria.levels[level].cells
    mine = cells[k, face_corners(dim, f)]
    theirs = cells[nb, face_corners(dim, g)].tolist()
    pos = [theirs.index(v) for v in mine.tolist()]

    def bits(q):
        return np.array([(q >> b) & 1 for b in range(dim - 1)], dtype=float)

    t0 = bits(pos[0])
    A = np.stack([bits(pos[1 << b]) - t0 for b in range(dim - 1)], axis=1) if dim > 1 else np.zeros((0, 0))
    return t0, A


def face_coordinates_in_neighbor(tria: Triangulation, cell: CellAccessor, f: int, x_hat: np.ndarray):
    """Reference coordinates, in the coarser neighbor, of points on face ``f`` of ``cell``.

    ``cell`` must see a coarser neighbor across ``f``. Returns the neighbor
    accessor and its reference coordinates of ``x_hat`` (points given in
    ``cell``'s reference cell).
    """
    info = tria.neighbor(cell, f)
    if info.kind != "coarser":
        raise ValueError("face does not have a coarser neighbor")
    dim = tria.dim
    parent = cell.parent()
    cb = corner_bits(dim)[cell.child_number]
    x_parent = (cb + np.atleast_2d(x_hat)) / 2.0
    a = f // 2
    tang = [b for b in range(dim) if b != a]
    g = info.neighbor_face
    t0, A = _face_map(tria, parent.level, parent.index, f, info.cell.index, g)
    t = t0 + x_parent[:, tang] @ A.T
    ga, gs = divmod(g, 2)
    x_coarse = np.empty_like(x_parent)
    x_coarse[:, ga] = gs
    x_coarse[:, [b for b in range(dim) if b != ga]] = t
    return info.cell, x_coarse


def make_hanging_node_constraints(dh: DoFHandler, constraints: AffineConstraints | None = None) -> AffineConstraints:
    """Constrain fine-side DoFs on faces with a coarser neighbor.

    Each such DoF equals the coarse-side trace at its location:
    coefficients are coarse shape-function values there. The result is not
    closed, so Dirichlet lines may still be added.
    """
    constraints = constraints or AffineConstraints()
    tria = dh.tria
    fe = dh.fe
    ref = fe.unit_support_points
    for r, cell in enumerate(dh.cells):
        dofs = dh.cell_dofs[r]
        for f in range(2 * tria.dim):
            info = tria.neighbor(cell, f)
            if info.kind != "coarser":
                continue
            coarse, x_coarse = face_coordinates_in_neighbor(tria, cell, f, ref[dh.face_nodes(f)])
            coarse_dofs = dh.cell_dof_indices(coarse)
            cnodes = dh.face_nodes(info.neighbor_face)
            values, _ = fe.tabulate(x_coarse)
            coarse_set = set(coarse_dofs.tolist())
            for col, i in enumerate(dh.face_nodes(f)):
                d = int(dofs[i])
                if d in coarse_set or constraints.is_constrained(d):
                    continue
                constraints.add_line(d)
                for j in cnodes:
                    v = values[j, col]
                    if v != 0.0:
                        constraints.add_entry(d, int(coarse_dofs[j]), float(v))
    return constraints


def interpolate_boundary_values(dh: DoFHandler, boundary_id, g, constraints: AffineConstraints | None = None,
                                mapping: MappingQ | None = None) -> AffineConstraints:
    """Constrain DoFs on faces with the given boundary id(s) to ``g`` at their support points.

    DoFs that are already constrained (e.g. hanging nodes) are left alone.
    """
    constraints = constraints or AffineConstraints()
    ids = {boundary_id} if np.isscalar(boundary_id) else set(boundary_id)
    g = as_function(g)
    mapping = mapping or MappingQ(1)
    tria = dh.tria
    ref = dh.fe.unit_support_points
    tables = mapping.reference_tables(tria.dim, ref)
    for r, cell in enumerate(dh.cells):
        bnd = tria.levels[cell.level].boundary[cell.index]
        faces = [f for f in range(2 * tria.dim) if bnd[f] in ids]
        if not faces:
            continue
        x, _ = mapping.cell_geometry(cell, ref, tables)
        dofs = dh.cell_dofs[r]
        for f in faces:
            nodes = dh.face_nodes(f)
            vals = g.value(x[nodes])
            for i, v in zip(nodes, vals):
                d = int(dofs[i])
                if not constraints.is_constrained(d):
                    constraints.set_inhomogeneity(d, float(v))
    return constraints


def evaluate_on_cell(dh: DoFHandler, u: np.ndarray, cell: CellAccessor, x_hat) -> np.ndarray:
    """FE function ``u`` at reference points ``x_hat`` of ``cell``."""
    values, _ = dh.fe.tabulate(np.atleast_2d(x_hat))
    return u[dh.cell_dof_indices(cell)] @ values


def hanging_face_samples(dh: DoFHandler, u: np.ndarray, n_points: int = 10, seed: int = 0):
    """Evaluate ``u`` from both sides of every hanging face.

    Returns two arrays (fine side, coarse side) of values at ``n_points``
    random points per face; they agree exactly for a conforming field.
    """
    rng = np.random.default_rng(seed)
    tria = dh.tria
    fine_vals, coarse_vals = [], []
    for cell in dh.cells:
        for f in range(2 * tria.dim):
            if tria.neighbor(cell, f).kind != "coarser":
                continue
            a, s = divmod(f, 2)
            pts = rng.random((n_points, tria.dim))
            pts[:, a] = s
            coarse, x_coarse = face_coordinates_in_neighbor(tria, cell, f, pts)
            fine_vals.append(evaluate_on_cell(dh, u, cell, pts))
            coarse_vals.append(evaluate_on_cell(dh, u, coarse, x_coarse))
    if not fine_vals:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(fine_vals), np.concatenate(coarse_vals)
