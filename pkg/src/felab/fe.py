"""Tensor-product Lagrange elements and Gauss quadrature on ``[0,1]^d``."""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from .errors import DomainError

MAX_DEGREE = 4


@lru_cache(maxsize=None)
def gauss_lobatto_points(n: int) -> np.ndarray:
    """``n`` Gauss-Lobatto points on [0, 1], symmetric to the last bit."""
    if n < 2:
        raise ValueError("Gauss-Lobatto rules need at least 2 points")
    # interior points are the roots of P'_{n-1}
    interior = np.polynomial.legendre.Legendre.basis(n - 1).deriv().roots() if n > 2 else np.array([])
    x = np.concatenate([[-1.0], np.sort(interior.real), [1.0]])
    x = 0.5 * (x + 1.0)
    x = 0.5 * (x + (1.0 - x[::-1]))
    if n % 2:
        x[n // 2] = 0.5
    x[0], x[-1] = 0.0, 1.0
    x.flags.writeable = False
    return x


@lru_cache(maxsize=None)
def gauss_legendre_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 1:
        raise ValueError("need at least one quadrature point")
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


class LagrangeBasis1D:
    """Lagrange polynomials through ``nodes``."""

    def __init__(self, nodes):
        self.nodes = np.asarray(nodes, dtype=float)
        n = len(self.nodes)
        diff = self.nodes[:, None] - self.nodes[None, :]
        np.fill_diagonal(diff, 1.0)
        self._denom = diff.prod(axis=1)
        self.n = n

    def values(self, x) -> np.ndarray:
        """``(len(x), n)`` table of basis values."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d = x[:, None] - self.nodes[None, :]
        out = np.empty((x.size, self.n))
        for i in range(self.n):
            out[:, i] = np.prod(np.delete(d, i, axis=1), axis=1) / self._denom[i]
        return out

    def derivatives(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d = x[:, None] - self.nodes[None, :]
        out = np.zeros((x.size, self.n))
        for i in range(self.n):
            others = [j for j in range(self.n) if j != i]
            for k in others:
                rest = [j for j in others if j != k]
                out[:, i] += np.prod(d[:, rest], axis=1)
            out[:, i] /= self._denom[i]
        return out


def tensor_indices(n: int, dim: int) -> np.ndarray:
    """Lexicographic multi-indices (x fastest), shape ``(n**dim, dim)``."""
    return np.array([tuple(reversed(t)) for t in itertools.product(range(n), repeat=dim)],
                    dtype=np.int64).reshape(-1, dim)


class FiniteElementQ:
    """Continuous Lagrange element ``Q_p`` with Gauss-Lobatto support points.

    Local degrees of freedom are numbered lexicographically on the
    ``(p+1)^d`` tensor grid of support points, x fastest.
    """

    def __init__(self, dim: int, degree: int):
        if dim not in (1, 2, 3):
            raise ValueError(f"dimension {dim} not supported")
        if not 1 <= degree <= MAX_DEGREE:
            raise ValueError(f"degree must be in 1..{MAX_DEGREE}, got {degree}")
        self.dim = dim
        self.degree = degree
        self.nodes_1d = gauss_lobatto_points(degree + 1)
        self.basis_1d = LagrangeBasis1D(self.nodes_1d)
        self.dofs_per_cell = (degree + 1) ** dim
        self.multi_indices = tensor_indices(degree + 1, dim)
        self.unit_support_points = self.nodes_1d[self.multi_indices]

    def __repr__(self):
        return f"FE_Q<{self.dim}>({self.degree})"

    def _check(self, i, x):
        if not 0 <= i < self.dofs_per_cell:
            raise IndexError(f"shape function {i} out of range")
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ValueError(f"expected a {self.dim}-dimensional point")
        if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
            raise DomainError(f"point {x} outside the reference cell")
        return x

    def shape_value(self, i: int, x) -> float:
        x = self._check(i, x)
        vals = self.basis_1d.values(x)
        return float(np.prod([vals[a, self.multi_indices[i, a]] for a in range(self.dim)]))

    def shape_grad(self, i: int, x) -> np.ndarray:
        x = self._check(i, x)
        vals = self.basis_1d.values(x)
        ders = self.basis_1d.derivatives(x)
        idx = self.multi_indices[i]
        g = np.empty(self.dim)
        for c in range(self.dim):
            g[c] = np.prod([ders[a, idx[a]] if a == c else vals[a, idx[a]] for a in range(self.dim)])
        return g

    def tabulate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Values ``(n_dofs, n_points)`` and gradients ``(n_dofs, n_points, dim)`` at many points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = np.stack([self.basis_1d.values(pts[:, a]) for a in range(self.dim)])
        ders = np.stack([self.basis_1d.derivatives(pts[:, a]) for a in range(self.dim)])
        n_pts = pts.shape[0]
        values = np.ones((self.dofs_per_cell, n_pts))
        grads = np.ones((self.dofs_per_cell, n_pts, self.dim))
        for a in range(self.dim):
            va = vals[a][:, self.multi_indices[:, a]].T
            da = ders[a][:, self.multi_indices[:, a]].T
            values *= va
            for c in range(self.dim):
                grads[:, :, c] *= da if c == a else va
        return values, grads


class QGauss:
    """Tensor-product Gauss-Legendre rule on ``[0,1]^d``, points x fastest."""

    def __init__(self, dim: int, n_1d: int):
        self.dim = dim
        self.n_1d = n_1d
        x, w = gauss_legendre_1d(n_1d)
        self.points_1d, self.weights_1d = x, w
        idx = tensor_indices(n_1d, dim)
        self.points = x[idx]
        self.weights = np.prod(w[idx], axis=1)

    def __len__(self):
        return len(self.weights)

    @property
    def size(self) -> int:
        return len(self.weights)


def make_gauss(dim: int, n_1d: int) -> QGauss:
    return QGauss(dim, n_1d)
