"""Geometric multigrid on globally refined meshes: transfers, Chebyshev smoothing, V-cycle."""
from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .dofs import AffineConstraints, DoFHandler, interpolate_boundary_values
from .errors import BreakdownError, LengthMismatch, NotGloballyRefined
from .fe import FiniteElementQ, QGauss
from .grid.triangulation import Triangulation, corner_bits
from .linalg import JacobiPreconditioner, SolverResult, _as_apply, cg_solve
from .mapping import MappingQ
from .matrixfree import LaplaceOperatorMF, build_matrix_free

DENSE_COARSE_LIMIT = 100


def child_interpolation_matrices(fe: FiniteElementQ) -> list[np.ndarray]:
    """Per child ``c``: values of the parent basis at the child's support points, ``(n, n)``."""
    out = []
    for bits in corner_bits(fe.dim):
        pts = (bits + fe.unit_support_points) / 2.0
        values, _ = fe.tabulate(pts)
        out.append(values.T.copy())
    return out


def _dirichlet_ids(tria: Triangulation) -> set:
    ids = set()
    for lev in tria.levels[:1]:
        b = lev.boundary
        ids.update(int(v) for v in np.unique(b[b >= 0]))
    return ids


class MGHierarchy:
    """Level DoFHandlers, operators and transfers for a globally refined mesh.

    Level ``l`` numbers the continuous space on all cells of refinement level
    ``l``; every boundary id in ``dirichlet_ids`` (default: all) carries a
    homogeneous constraint on every level.
    """

    def __init__(self, tria: Triangulation, fe: FiniteElementQ, mapping: MappingQ | None = None,
                 dirichlet_ids=None, batch_width: int = 4, smoother_dtype=np.float64, threads: int = 1):
        if not tria.is_globally_refined():
            raise NotGloballyRefined("multigrid needs a mesh produced by global refinement")
        self.tria = tria
        self.fe = fe
        self.mapping = mapping or MappingQ(1)
        ids = _dirichlet_ids(tria) if dirichlet_ids is None else set(dirichlet_ids)
        quad = QGauss(tria.dim, fe.degree + 1)
        self.n_levels = tria.n_levels
        self.dofs: list[DoFHandler] = []
        self.constraints: list[AffineConstraints] = []
        self.operators: list[LaplaceOperatorMF] = []
        self.smoother_operators: list[LaplaceOperatorMF] = []
        for level in range(self.n_levels):
            dh = DoFHandler(tria, fe, level=level)
            c = interpolate_boundary_values(dh, ids, 0.0, mapping=self.mapping).close() if ids \
                else AffineConstraints().close()
            data = build_matrix_free(dh, c, self.mapping, quad, batch_width)
            op = LaplaceOperatorMF(data, threads=threads)
            self.dofs.append(dh)
            self.constraints.append(c)
            self.operators.append(op)
            if np.dtype(smoother_dtype) == np.float64:
                self.smoother_operators.append(op)
            else:
                data32 = build_matrix_free(dh, c, self.mapping, quad, batch_width, smoother_dtype)
                self.smoother_operators.append(LaplaceOperatorMF(data32, threads=threads))
        self.transfers = [self._build_transfer(level) for level in range(self.n_levels - 1)]

    def n_dofs(self, level: int) -> int:
        return self.dofs[level].n_dofs

    def _build_transfer(self, level: int) -> sp.csr_matrix:
        coarse, fine = self.dofs[level], self.dofs[level + 1]
        mats = child_interpolation_matrices(self.fe)
        n = self.fe.dofs_per_cell
        rows, cols, vals = [], [], []
        for r, cell in enumerate(coarse.cells):
            cdofs = coarse.cell_dofs[r]
            for c, child in enumerate(cell.children()):
                fdofs = fine.cell_dofs[fine.row_of(child)]
                rows.append(fdofs)
                cols.append(cdofs)
                vals.append(mats[c])
        rows = np.concatenate(rows)
        # each fine DoF takes its row from the first (cell, child) that reaches it
        _, first = np.unique(rows, return_index=True)
        block = first // n
        local = first % n
        R = np.repeat(rows[first], n)
        C = np.stack(cols)[block].ravel()
        V = np.stack(vals)[block, local].ravel()
        keep = V != 0.0
        P = sp.csr_matrix((V[keep], (R[keep], C[keep])), shape=(fine.n_dofs, coarse.n_dofs))
        fmask = self.constraints[level + 1].constrained_mask(fine.n_dofs)
        cmask = self.constraints[level].constrained_mask(coarse.n_dofs)
        P = sp.diags((~fmask).astype(float)) @ P @ sp.diags((~cmask).astype(float))
        P.eliminate_zeros()
        return P.tocsr()

    def prolongate(self, level: int, x_coarse: np.ndarray) -> np.ndarray:
        """Level ``level`` vector to level ``level + 1``."""
        P = self.transfers[level]
        if len(x_coarse) != P.shape[1]:
            raise LengthMismatch(f"expected length {P.shape[1]}, got {len(x_coarse)}")
        return P @ x_coarse

    def restrict(self, level: int, r_fine: np.ndarray) -> np.ndarray:
        """Level ``level + 1`` vector to level ``level`` (transpose of prolongation)."""
        P = self.transfers[level]
        if len(r_fine) != P.shape[0]:
            raise LengthMismatch(f"expected length {P.shape[0]}, got {len(r_fine)}")
        return P.T @ r_fine


def build_hierarchy(tria, fe, mapping=None, **kwargs) -> MGHierarchy:
    return MGHierarchy(tria, fe, mapping, **kwargs)


def prolongate(h: MGHierarchy, level: int, x_coarse):
    return h.prolongate(level, x_coarse)


def restrict(h: MGHierarchy, level: int, r_fine):
    return h.restrict(level, r_fine)


def lanczos_ritz_values(op, diagonal, n_cg: int = 12, seed: int = 0) -> np.ndarray:
    """Ritz values of ``D^{-1} A`` from ``n_cg`` Jacobi-preconditioned CG steps."""
    apply_a = _as_apply(op)
    inv_d = 1.0 / np.asarray(diagonal, dtype=float)
    n = len(inv_d)
    rng = np.random.default_rng(seed)
    b = rng.random(n) - 0.5
    x = np.zeros(n)
    r = b.copy()
    z = inv_d * r
    p = z.copy()
    rz = float(r @ z)
    r0 = rz
    alphas, betas = [], []
    for _ in range(min(n_cg, n)):
        q = np.asarray(apply_a(p), dtype=float)
        curv = float(p @ q)
        if not curv > 0.0:
            raise BreakdownError(f"non-positive curvature {curv:.3e} in eigenvalue estimate")
        alpha = rz / curv
        alphas.append(alpha)
        x += alpha * p
        r -= alpha * q
        z = inv_d * r
        rz_new = float(r @ z)
        if rz_new <= 1e-28 * r0:
            break
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    k = len(alphas)
    diag = np.empty(k)
    off = np.empty(max(k - 1, 0))
    for i in range(k):
        diag[i] = 1.0 / alphas[i] + (betas[i - 1] / alphas[i - 1] if i > 0 else 0.0)
        if i < k - 1:
            off[i] = np.sqrt(betas[i]) / alphas[i]
    return scipy.linalg.eigvalsh_tridiagonal(diag, off) if k > 1 else diag


def estimate_eigenvalue(op, diagonal, n_cg: int = 12, safety: float = 1.2, seed: int = 0) -> float:
    """Largest Ritz value of the Jacobi-preconditioned operator, times ``safety``."""
    return float(lanczos_ritz_values(op, diagonal, n_cg, seed).max()) * safety


class ChebyshevSmoother:
    """Chebyshev iteration for ``D^{-1} A`` on ``[lambda_max / range, lambda_max]``.

    ``lambda_max`` is the Lanczos estimate already scaled by ``safety``.
    Each application runs ``degree`` steps of the three-term recurrence and
    is a fixed linear map of ``(b, x)``.
    """

    def __init__(self, op, diagonal=None, degree: int = 6, smoothing_range: float = 20.0,
                 safety: float = 1.2, n_cg: int = 12, lambda_max: float | None = None):
        if degree < 1:
            raise ValueError("Chebyshev degree must be at least 1")
        self.op = op
        self.degree = degree
        diagonal = op.diagonal() if diagonal is None else diagonal
        self.dtype = np.asarray(diagonal).dtype if np.asarray(diagonal).dtype.kind == "f" else np.float64
        self.inverse_diagonal = (1.0 / np.asarray(diagonal, dtype=np.float64)).astype(self.dtype)
        if lambda_max is None:
            lambda_max = estimate_eigenvalue(op, np.asarray(diagonal, dtype=np.float64), n_cg, safety)
        self.lambda_max = float(lambda_max)
        self.lambda_min = self.lambda_max / smoothing_range
        self._apply = _as_apply(op)

    @property
    def interval(self) -> tuple[float, float]:
        return self.lambda_min, self.lambda_max

    def apply(self, b: np.ndarray, x: np.ndarray) -> None:
        """Smooth ``x`` in place towards the solution of ``A x = b``."""
        dt = self.dtype
        a, bmax = self.lambda_min, self.lambda_max
        theta = 0.5 * (bmax + a)
        delta = 0.5 * (bmax - a)
        sigma = theta / delta
        rho = 1.0 / sigma
        bb = np.asarray(b, dtype=dt)
        xx = np.asarray(x, dtype=dt)
        r = self.inverse_diagonal * (bb - self._apply(xx))
        d = (r / theta).astype(dt, copy=False)
        for k in range(self.degree):
            xx = xx + d
            if k == self.degree - 1:
                break
            r = r - self.inverse_diagonal * self._apply(d)
            rho_new = 1.0 / (2.0 * sigma - rho)
            d = (rho_new * rho) * d + (2.0 * rho_new / delta) * r
            d = d.astype(dt, copy=False)
            rho = rho_new
        x[...] = xx


def chebyshev_apply(sm: ChebyshevSmoother, op, b, x) -> None:
    if op is not None and op is not sm.op:
        raise ValueError("smoother was set up for a different operator")
    sm.apply(b, x)


def chebyshev_bound(lambda_min: float, lambda_max: float, degree: int) -> float:
    """``1 / T_k(sigma)`` written as ``2 rho^k / (1 + rho^(2k))``."""
    kappa = lambda_max / lambda_min
    rho = (np.sqrt(kappa) - 1.0) / (np.sqrt(kappa) + 1.0)
    return 2.0 * rho**degree / (1.0 + rho ** (2 * degree))


class _DenseCoarse:
    def __init__(self, op, n):
        apply_a = _as_apply(op)
        A = np.column_stack([apply_a(e) for e in np.eye(n)])
        self.lu = scipy.linalg.lu_factor(A)

    def solve(self, b):
        return scipy.linalg.lu_solve(self.lu, b)


class _CGCoarse:
    def __init__(self, op, tol=1e-12):
        self.op = op
        self.tol = tol
        self.precond = JacobiPreconditioner(op.diagonal())

    def solve(self, b):
        return cg_solve(self.op, b, self.precond, self.tol, max_iter=10 * len(b) + 100).x


class VCycle:
    """One multigrid V-cycle as a linear preconditioner ``x = V b``."""

    def __init__(self, hierarchy: MGHierarchy, degree: int = 6, smoothing_range: float = 20.0,
                 coarse_solver: str = "auto"):
        self.h = hierarchy
        self.smoothers: list[ChebyshevSmoother | None] = [None]
        for level in range(1, hierarchy.n_levels):
            op = hierarchy.smoother_operators[level]
            diag = op.diagonal()
            lam = estimate_eigenvalue(hierarchy.operators[level], diag.astype(np.float64))
            self.smoothers.append(ChebyshevSmoother(op, diag, degree, smoothing_range, lambda_max=lam))
        op0 = hierarchy.operators[0]
        n0 = hierarchy.n_dofs(0)
        if coarse_solver == "dense" or (coarse_solver == "auto" and n0 < DENSE_COARSE_LIMIT):
            self.coarse = _DenseCoarse(op0, n0)
        else:
            self.coarse = _CGCoarse(op0)
        self.n_applications = 0

    @property
    def n_dofs(self) -> int:
        return self.h.n_dofs(self.h.n_levels - 1)

    def _cycle(self, level: int, b: np.ndarray) -> np.ndarray:
        if level == 0:
            return self.coarse.solve(b)
        op = self.h.operators[level]
        sm = self.smoothers[level]
        x = np.zeros_like(b)
        sm.apply(b, x)
        r = b - op.vmult(x)
        x += self.h.prolongate(level - 1, self._cycle(level - 1, self.h.restrict(level - 1, r)))
        sm.apply(b, x)
        return x

    def vmult(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if len(b) != self.n_dofs:
            raise LengthMismatch(f"expected length {self.n_dofs}, got {len(b)}")
        self.n_applications += 1
        return self._cycle(self.h.n_levels - 1, b)

    __call__ = vmult


def v_cycle(vc: VCycle, b, x=None) -> np.ndarray:
    """One V-cycle for ``A x = b`` starting from ``x`` (zero by default)."""
    if x is None:
        return vc.vmult(b)
    A = vc.h.operators[-1]
    return x + vc.vmult(b - A.vmult(x))


def residual_reduction_rate(vc: VCycle, b: np.ndarray, n_cycles: int = 10) -> float:
    """Geometric mean of ``||r_{k+1}|| / ||r_k||`` for the stationary V-cycle iteration."""
    A = vc.h.operators[-1]
    x = np.zeros_like(b)
    r0 = np.linalg.norm(b)
    r = b.copy()
    for _ in range(n_cycles):
        x += vc.vmult(r)
        r = b - A.vmult(x)
    return float((np.linalg.norm(r) / r0) ** (1.0 / n_cycles))


def mg_preconditioned_cg(vc: VCycle, A=None, b=None, rel_tol: float = 1e-10, max_iter: int = 200) -> SolverResult:
    A = vc.h.operators[-1] if A is None else A
    return cg_solve(A, b, vc, rel_tol, max_iter)
