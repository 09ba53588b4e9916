"""Matrix-free Laplace operator evaluated with sum factorization on cell batches.

Cells are grouped into batches of ``w`` lanes; every per-cell array keeps
the lane as its innermost axis, e.g. geometry is ``(n_batches, n_q, d, d, w)``.
Batches are colored so that batches of one color touch disjoint DoFs.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .dofs import AffineConstraints, DoFHandler
from .errors import LengthMismatch
from .fe import QGauss
from .fevalues import checked_inverse
from .mapping import MappingQ


class OpCounter:
    """Multiply-add counter for the cell kernel (per cell, i.e. per lane)."""

    def __init__(self):
        self.per_cell = 0
        self.total = 0
        self.enabled = True

    def reset(self):
        self.per_cell = 0
        self.total = 0

    def add(self, n: int):
        if self.enabled:
            self.per_cell += int(n)


class MatrixFreeData:
    """Precomputed geometry, index tables and 1d kernels for one DoFHandler."""

    def __init__(self, dh: DoFHandler, constraints: AffineConstraints, mapping: MappingQ,
                 quadrature: QGauss, batch_width: int = 4, dtype=np.float64):
        if not 1 <= batch_width <= 8:
            raise ValueError("batch width must be in 1..8")
        constraints._require_closed()
        self.dh = dh
        self.constraints = constraints
        self.mapping = mapping
        self.quadrature = quadrature
        self.dtype = np.dtype(dtype)
        self.dim = dim = dh.tria.dim
        self.degree = dh.fe.degree
        self.n_dofs = dh.n_dofs
        self.width = w = batch_width
        n_cells = dh.n_cells
        self.n_cells = n_cells
        self.n_batches = nb = -(-n_cells // w)
        self.n_padded_lanes = nb * w - n_cells
        lane_rows = np.arange(nb * w)
        lane_rows[n_cells:] = n_cells - 1
        self.lane_rows = lane_rows.reshape(nb, w)
        self.lane_valid = (np.arange(nb * w) < n_cells).reshape(nb, w)

        fe = dh.fe
        x1, _ = quadrature.points_1d, quadrature.weights_1d
        self.shape_1d = fe.basis_1d.values(x1).astype(self.dtype)        # (nq1, n1)
        self.deriv_1d = fe.basis_1d.derivatives(x1).astype(self.dtype)
        self.n_1d = fe.degree + 1
        self.nq_1d = len(x1)
        self.n_local = fe.dofs_per_cell
        self.n_q = len(quadrature.weights)
        self._build_geometry()
        self._build_indices()
        self._build_colors()

    # -------------------------------------------------------------- setup
    def _build_geometry(self):
        dim, nq = self.dim, self.n_q
        jinvt = np.empty((self.n_cells, nq, dim, dim))
        jxw = np.empty((self.n_cells, nq))
        pts = self.quadrature.points
        w = self.quadrature.weights
        tables = self.mapping.reference_tables(dim, pts)
        for r, cell in enumerate(self.dh.cells):
            box = self.mapping.cell_box(cell)
            if box is not None:
                _, extent = box
                jinvt[r] = np.diag(1.0 / extent)
                jxw[r] = np.prod(extent) * w
                continue
            _, jac = self.mapping.cell_geometry(cell, pts, tables)
            inv, det = checked_inverse(jac)
            jinvt[r] = np.swapaxes(inv, 1, 2)
            jxw[r] = np.abs(det) * w
        rows = self.lane_rows
        # lanes innermost
        self.jinvt = np.ascontiguousarray(np.transpose(jinvt[rows], (0, 2, 3, 4, 1))).astype(self.dtype)
        self.jxw = np.ascontiguousarray(np.transpose(jxw[rows], (0, 2, 1))).astype(self.dtype)

    def _build_indices(self):
        c = self.constraints
        table = self.dh.cell_dofs
        mask = c.constrained_mask(self.n_dofs)
        per_dof: dict[int, tuple[list, list]] = {}
        k_max = 1
        for d in c.constrained_dofs():
            line, _ = c.line(d)
            per_dof[int(d)] = ([j for j, _ in line], [v for _, v in line])
            k_max = max(k_max, len(line))
        nb, w, n = self.n_batches, self.width, self.n_local
        idx = np.zeros((self.n_cells, n, k_max), dtype=np.int64)
        coef = np.zeros((self.n_cells, n, k_max))
        idx[:, :, 0] = table
        coef[:, :, 0] = 1.0
        for r, i in zip(*np.nonzero(mask[table])):
            cols, vals = per_dof[int(table[r, i])]
            idx[r, i, :] = 0
            coef[r, i, :] = 0.0
            idx[r, i, :len(cols)] = cols
            coef[r, i, :len(vals)] = vals
        self.k_max = k_max
        rows = self.lane_rows
        self.gather_idx = np.ascontiguousarray(np.transpose(idx[rows], (0, 2, 3, 1)))     # (nb, n, K, w)
        self.gather_coef = np.ascontiguousarray(np.transpose(coef[rows], (0, 2, 3, 1))).astype(self.dtype)
        self.scatter_coef = self.gather_coef * self.lane_valid[:, None, None, :]
        self.constrained = np.flatnonzero(mask)

    def _build_colors(self):
        """Greedy coloring: batches of one color share no (resolved) DoF."""
        colors: list[list[int]] = []
        used: list[set] = []
        for b in range(self.n_batches):
            touched = set(self.gather_idx[b][self.scatter_coef[b] != 0].tolist())
            touched.update(self.dh.cell_dofs[self.lane_rows[b][self.lane_valid[b]]].ravel().tolist())
            for ci, s in enumerate(used):
                if not (s & touched):
                    colors[ci].append(b)
                    s |= touched
                    break
            else:
                colors.append([b])
                used.append(set(touched))
        self.colors = [np.array(c, dtype=np.int64) for c in colors]

    def batch_dofs(self, b: int) -> set:
        return set(self.dh.cell_dofs[self.lane_rows[b][self.lane_valid[b]]].ravel().tolist()) | \
            set(self.gather_idx[b][self.scatter_coef[b] != 0].tolist())

    def lane_cells(self, b: int) -> list:
        return [self.dh.cells[r] for r in self.lane_rows[b]]


def build_matrix_free(dh, constraints, mapping, quadrature, batch_width: int = 4, dtype=np.float64):
    return MatrixFreeData(dh, constraints, mapping, quadrature, batch_width, dtype)


def _apply_1d(mat: np.ndarray, x: np.ndarray, axis: int, counter: OpCounter | None, transpose=False):
    """Contract ``mat`` (n_out, n_in) with ``x`` along ``axis``."""
    m = mat.T if transpose else mat
    n_out, n_in = m.shape
    if counter is not None:
        # x has shape (B, ..., w): count per cell
        rest = np.prod(x.shape[1:-1]) // x.shape[axis]
        counter.add(n_out * n_in * rest)
    y = np.tensordot(m, x, axes=([1], [axis]))
    return np.moveaxis(y, 0, axis)


class LaplaceOperatorMF:
    """``dst = A src`` for the Laplace form, with constrained rows acting as identity."""

    def __init__(self, data: MatrixFreeData, sum_factorization: bool = True, threads: int = 1):
        self.data = data
        self.sum_factorization = sum_factorization
        self.threads = max(1, int(threads))
        self.counter = OpCounter()
        self.n_dofs = data.n_dofs
        d = data
        if not sum_factorization:
            from .fe import tensor_indices
            qi = tensor_indices(d.nq_1d, d.dim)
            ni = tensor_indices(d.n_1d, d.dim)
            grads = np.ones((d.dim, d.n_q, d.n_local), dtype=d.dtype)
            for c in range(d.dim):
                for a in range(d.dim):
                    m = d.deriv_1d if a == c else d.shape_1d
                    grads[c] *= m[qi[:, a]][:, ni[:, a]]
            self._dense_grads = grads

    @property
    def shape(self):
        return (self.n_dofs, self.n_dofs)

    # ------------------------------------------------------------ kernels
    def cell_kernel(self, u: np.ndarray, batches: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
        """Apply the cell operator to lane-local values ``u`` of shape ``(B, n_local, w)``."""
        d = self.data
        if counter is not None:
            counter.per_cell = 0
        if not self.sum_factorization:
            return self._dense_kernel(u, batches, counter)
        B, w = u.shape[0], u.shape[-1]
        dim, n1 = d.dim, d.n_1d
        x = u.reshape((B,) + (n1,) * dim + (w,))
        grads = []
        for c in range(dim):
            y = x
            for a in range(dim):
                y = _apply_1d(d.deriv_1d if a == c else d.shape_1d, y, dim - a, counter)
            grads.append(y.reshape(B, -1, w))
        g = np.stack(grads, axis=1)                            # (B, d, nq, w)
        t = self._quadrature(g, batches, counter)
        out = 0
        for c in range(dim):
            y = t[:, c].reshape((B,) + (d.nq_1d,) * dim + (w,))
            for a in range(dim):
                y = _apply_1d(d.deriv_1d if a == c else d.shape_1d, y, dim - a, counter, transpose=True)
            out = out + y
        return out.reshape(B, -1, w)

    def _quadrature(self, g, batches, counter):
        d = self.data
        jt = d.jinvt[batches]                                  # (B, nq, d, d, w)
        jxw = d.jxw[batches]                                   # (B, nq, w)
        real = np.einsum("bqijl,bjql->biql", jt, g)
        real *= jxw[:, None]
        if counter is not None:
            counter.add(2 * d.dim * d.dim * d.n_q + d.dim * d.n_q)
        return np.einsum("bqijl,biql->bjql", jt, real)

    def _dense_kernel(self, u, batches, counter):
        d = self.data
        G = self._dense_grads                                  # (d, nq, n)
        g = np.einsum("cqn,bnl->bcql", G, u)
        if counter is not None:
            counter.add(2 * G.size)
        t = self._quadrature(g, batches, counter)
        return np.einsum("cqn,bcql->bnl", G, t)

    # -------------------------------------------------------- gather/scatter
    def _gather(self, src, batches):
        d = self.data
        idx = d.gather_idx[batches]
        if d.k_max == 1:
            return src[idx[:, :, 0]] * d.gather_coef[batches][:, :, 0]
        return np.einsum("bnkl,bnkl->bnl", src[idx], d.gather_coef[batches])

    def _contributions(self, src, batches):
        d = self.data
        u = self._gather(src, batches)
        v = self.cell_kernel(u, batches, self.counter if self.counter.enabled else None)
        weights = d.scatter_coef[batches] * v[:, :, None, :]
        return d.gather_idx[batches].ravel(), weights.ravel()

    def vmult(self, src: np.ndarray) -> np.ndarray:
        d = self.data
        if len(src) != self.n_dofs:
            raise LengthMismatch(f"vector of length {len(src)}, operator has {self.n_dofs} rows")
        src = np.asarray(src, dtype=d.dtype)
        dst = np.zeros(self.n_dofs, dtype=d.dtype)
        self.counter.total = 0
        for color in d.colors:
            if self.threads > 1 and len(color) > 1:
                chunks = np.array_split(color, min(self.threads, len(color)))
                with ThreadPoolExecutor(self.threads) as pool:
                    parts = list(pool.map(lambda c: self._contributions(src, c), chunks))
            else:
                parts = [self._contributions(src, color)]
            # disjoint DoFs within a color, so the scatter order cannot change the sum
            for idx, wts in parts:
                dst += np.bincount(idx, weights=wts, minlength=self.n_dofs).astype(d.dtype)
            self.counter.total += self.counter.per_cell * d.width * len(color)
        dst[d.constrained] = src[d.constrained]
        return dst

    __call__ = vmult

    def count_cell_ops(self) -> int:
        """Multiply-adds per cell of one kernel application."""
        d = self.data
        u = np.zeros((1, d.n_local, d.width), dtype=d.dtype)
        c = OpCounter()
        self.cell_kernel(u, np.array([0]), c)
        return c.per_cell

    # --------------------------------------------------------- diagonal
    def local_matrices(self, batches: np.ndarray) -> np.ndarray:
        """Cell matrices ``(B, n_local, n_local, w)`` by applying the kernel to unit vectors."""
        d = self.data
        n, w = d.n_local, d.width
        out = np.empty((len(batches), n, n, w), dtype=d.dtype)
        for k, b in enumerate(batches):
            e = np.broadcast_to(np.eye(n, dtype=d.dtype)[:, :, None], (n, n, w))
            col = self.cell_kernel(np.ascontiguousarray(e), np.full(n, b))   # column j of L in row j
            out[k] = np.transpose(col, (1, 0, 2))
        return out

    def compute_diagonal(self) -> np.ndarray:
        d = self.data
        diag = np.zeros(self.n_dofs)
        saved, self.counter.enabled = self.counter.enabled, False
        try:
            for b in range(d.n_batches):
                L = self.local_matrices(np.array([b]))[0]          # (n, n, w)
                idx = d.gather_idx[b]                              # (n, K, w)
                coef = d.scatter_coef[b]
                for lane in range(d.width):
                    if not d.lane_valid[b, lane]:
                        continue
                    Ll = L[:, :, lane]
                    if d.k_max == 1 and np.all(coef[:, 0, lane] == 1.0):
                        np.add.at(diag, idx[:, 0, lane], np.diag(Ll))
                        continue
                    targets, inv = np.unique(idx[:, :, lane], return_inverse=True)
                    E = np.zeros((d.n_local, len(targets)))
                    np.add.at(E, (np.repeat(np.arange(d.n_local), d.k_max), inv.ravel()),
                              coef[:, :, lane].ravel())
                    diag[targets] += np.einsum("it,ij,jt->t", E, Ll, E)
        finally:
            self.counter.enabled = saved
        diag[d.constrained] = 1.0
        return diag.astype(d.dtype)

    def diagonal(self) -> np.ndarray:
        if not hasattr(self, "_diag"):
            self._diag = self.compute_diagonal()
        return self._diag


def mf_apply(op: LaplaceOperatorMF, src: np.ndarray) -> np.ndarray:
    return op.vmult(src)


def mf_compute_diagonal(op: LaplaceOperatorMF) -> np.ndarray:
    return op.compute_diagonal()
