"""Sparsity patterns, CSR matrices, and preconditioned conjugate gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import BreakdownError, LengthMismatch, MaxIterations, SparsityMiss, ZeroDiagonal


class DynamicSparsityPattern:
    """Row-set builder; :meth:`compress` turns it into a :class:`SparsityPattern`."""

    def __init__(self, n_rows: int, n_cols: int | None = None):
        self.n_rows = n_rows
        self.n_cols = n_rows if n_cols is None else n_cols
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []

    def add_entries(self, rows, cols) -> None:
        """Add the full block ``rows x cols``."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        self._rows.append(np.repeat(rows, len(cols)))
        self._cols.append(np.tile(cols, len(rows)))

    def add(self, i: int, j: int) -> None:
        self.add_entries([i], [j])

    def compress(self) -> "SparsityPattern":
        if self._rows:
            keys = np.unique(np.concatenate(self._rows) * self.n_cols + np.concatenate(self._cols))
        else:
            keys = np.zeros(0, dtype=np.int64)
        rows, cols = np.divmod(keys, self.n_cols)
        row_start = np.searchsorted(rows, np.arange(self.n_rows + 1))
        return SparsityPattern(self.n_rows, self.n_cols, row_start, cols)


class SparsityPattern:
    """Compressed rows: ``row_start`` (n+1) and sorted ``col_index`` per row."""

    def __init__(self, n_rows, n_cols, row_start, col_index):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row_start = np.asarray(row_start, dtype=np.int64)
        self.col_index = np.asarray(col_index, dtype=np.int64)
        rows = np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_start))
        self._keys = rows * self.n_cols + self.col_index

    @property
    def n_nonzero(self) -> int:
        return len(self.col_index)

    def row_length(self, i: int) -> int:
        return int(self.row_start[i + 1] - self.row_start[i])

    def columns(self, i: int) -> np.ndarray:
        return self.col_index[self.row_start[i]:self.row_start[i + 1]]

    def exists(self, i: int, j: int) -> bool:
        k = i * self.n_cols + j
        pos = np.searchsorted(self._keys, k)
        return bool(pos < len(self._keys) and self._keys[pos] == k)

    def is_symmetric(self) -> bool:
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_start))
        return np.array_equal(np.sort(self.col_index * self.n_cols + rows), self._keys)

    def positions(self, rows, cols) -> np.ndarray:
        """Value-array offsets of the block ``rows x cols``; SparsityMiss if any is absent."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        pos = self.positions_pairs(np.repeat(rows, len(cols)), np.tile(cols, len(rows)))
        return pos.reshape(len(rows), len(cols))

    def cell_positions(self, cell_dofs: np.ndarray) -> np.ndarray:
        """Offsets ``(n_cells, n, n)`` of the dense blocks of many index sets."""
        cell_dofs = np.asarray(cell_dofs, dtype=np.int64)
        m, n = cell_dofs.shape
        flat = np.repeat(cell_dofs, n, axis=1).ravel()
        return self.positions_pairs(flat, np.tile(cell_dofs, (1, n)).ravel()).reshape(m, n, n)

    def positions_pairs(self, rows, cols) -> np.ndarray:
        keys = np.asarray(rows, dtype=np.int64) * self.n_cols + np.asarray(cols, dtype=np.int64)
        pos = np.searchsorted(self._keys, keys)
        pos_c = np.minimum(pos, max(len(self._keys) - 1, 0))
        bad = (pos >= len(self._keys)) | (self._keys[pos_c] != keys)
        if np.any(bad):
            k = int(keys[np.argmax(bad)])
            raise SparsityMiss(f"entry ({k // self.n_cols}, {k % self.n_cols}) not in sparsity pattern")
        return pos


def build_sparsity(dh, constraints=None) -> SparsityPattern:
    """Couplings of all resolved cell indices; constrained diagonals are kept."""
    dsp = DynamicSparsityPattern(dh.n_dofs)
    table = dh.cell_dofs
    plain = np.ones(len(table), dtype=bool)
    if constraints is not None and len(constraints):
        constraints._require_closed()
        mask = constraints.constrained_mask(dh.n_dofs)
        plain = ~mask[table].any(axis=1)
        for row in np.flatnonzero(~plain):
            targets, _, _ = constraints.resolve_local(table[row])
            dsp.add_entries(targets, targets)
        c = constraints.constrained_dofs()
        dsp._rows.append(c)
        dsp._cols.append(c)
    # unconstrained cells in one vectorized chunk
    block = table[plain]
    n = table.shape[1]
    dsp._rows.append(np.repeat(block, n, axis=1).ravel())
    dsp._cols.append(np.tile(block, (1, n)).ravel())
    return dsp.compress()


class SparseMatrix:
    """Values on a fixed :class:`SparsityPattern`."""

    def __init__(self, pattern: SparsityPattern, dtype=np.float64):
        self.pattern = pattern
        self.values = np.zeros(pattern.n_nonzero, dtype=dtype)
        self._csr = None

    @property
    def shape(self):
        return (self.pattern.n_rows, self.pattern.n_cols)

    def add_block(self, rows, cols, block) -> None:
        pos = self.pattern.positions(rows, cols)
        np.add.at(self.values, pos.ravel(), np.asarray(block, dtype=self.values.dtype).ravel())
        self._csr = None

    def add(self, i: int, j: int, v: float) -> None:
        self.add_block([i], [j], [[v]])

    def set(self, i: int, j: int, v: float) -> None:
        self.values[self.pattern.positions([i], [j])[0, 0]] = v
        self._csr = None

    def el(self, i: int, j: int) -> float:
        if not self.pattern.exists(i, j):
            return 0.0
        return float(self.values[self.pattern.positions([i], [j])[0, 0]])

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def to_scipy(self) -> sp.csr_matrix:
        if self._csr is None:
            p = self.pattern
            self._csr = sp.csr_matrix((self.values, p.col_index, p.row_start), shape=self.shape)
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def vmult(self, src: np.ndarray) -> np.ndarray:
        if len(src) != self.shape[1]:
            raise LengthMismatch(f"vector of length {len(src)} for matrix with {self.shape[1]} columns")
        return self.to_scipy() @ src

    @property
    def n_dofs(self) -> int:
        return self.shape[0]


def _as_apply(op):
    if hasattr(op, "vmult"):
        return op.vmult
    if callable(op):
        return op
    if sp.issparse(op) or isinstance(op, np.ndarray):
        return lambda x: op @ x
    raise TypeError(f"cannot apply object of type {type(op).__name__}")


class IdentityPreconditioner:
    def vmult(self, r):
        return r.copy()


class JacobiPreconditioner:
    """``y_i = r_i / d_i``."""

    def __init__(self, diagonal):
        d = np.asarray(diagonal, dtype=float)
        if np.any(~(d > 0)):
            i = int(np.argmax(~(d > 0)))
            raise ZeroDiagonal(f"diagonal entry {i} is {d[i]}, expected > 0")
        self.inverse_diagonal = 1.0 / d

    def vmult(self, r):
        return r * self.inverse_diagonal


def jacobi_precondition(matrix_or_diagonal) -> JacobiPreconditioner:
    if isinstance(matrix_or_diagonal, SparseMatrix):
        return JacobiPreconditioner(matrix_or_diagonal.diagonal())
    if sp.issparse(matrix_or_diagonal):
        return JacobiPreconditioner(matrix_or_diagonal.diagonal())
    a = np.asarray(matrix_or_diagonal, dtype=float)
    return JacobiPreconditioner(np.diag(a) if a.ndim == 2 else a)


@dataclass
class SolverResult:
    x: np.ndarray
    iterations: int
    final_residual: float
    residual_history: list


def cg_solve(A, b, precond=None, rel_tol: float = 1e-10, max_iter: int = 1000, x0=None) -> SolverResult:
    """Preconditioned CG stopping on ``||b - A x|| <= rel_tol ||b||``.

    The recursively updated residual is replaced by the true residual every
    10 iterations and before accepting convergence.
    """
    apply_a = _as_apply(A)
    apply_p = _as_apply(precond) if precond is not None else (lambda r: r.copy())
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    r = b - apply_a(x) if x0 is not None else b.copy()
    history = [float(np.linalg.norm(r))]
    if bnorm == 0.0:
        return SolverResult(np.zeros_like(b), 0, 0.0, history)
    target = rel_tol * bnorm
    if history[0] <= target:
        return SolverResult(x, 0, history[0], history)
    z = apply_p(r)
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        q = apply_a(p)
        curv = float(p @ q)
        if not curv > 0.0:
            raise BreakdownError(f"non-positive curvature {curv:.3e} at iteration {it}")
        alpha = rz / curv
        x += alpha * p
        if it % 10 == 0:
            r = b - apply_a(x)
        else:
            r -= alpha * q
        rnorm = float(np.linalg.norm(r))
        if rnorm <= target:
            true_r = b - apply_a(x)
            rnorm = float(np.linalg.norm(true_r))
            if rnorm <= target:
                history.append(rnorm)
                return SolverResult(x, it, rnorm, history)
            r = true_r
        history.append(rnorm)
        z = apply_p(r)
        rz_new = float(r @ z)
        if rz_new < 0.0:
            raise BreakdownError("preconditioner is not positive definite")
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise MaxIterations(f"no convergence in {max_iter} iterations (residual {history[-1]:.3e})",
                        result=SolverResult(x, max_iter, history[-1], history))
