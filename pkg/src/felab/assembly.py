"""Cell loops for the Laplace bilinear form and for error norms."""
from __future__ import annotations

import numpy as np

from .dofs import AffineConstraints, DoFHandler
from .fe import QGauss
from .fevalues import FEValues, UpdateFlags
from .functions import as_function
from .linalg import SparseMatrix
from .mapping import MappingQ


def local_laplace(fev: FEValues) -> np.ndarray:
    """``sum_q grad phi_i . grad phi_j JxW`` on the current cell."""
    g = fev.shape_grads
    return np.einsum("iqa,jqa,q->ij", g, g, fev.JxW_values)


def local_rhs(fev: FEValues, f) -> np.ndarray:
    return fev.shape_values @ (f.value(fev.quadrature_points) * fev.JxW_values)


def assemble_laplace(dh: DoFHandler, constraints: AffineConstraints | None, fev: FEValues, f,
                     A: SparseMatrix | None, b: np.ndarray | None) -> None:
    """Add the stiffness matrix and load vector of ``-Laplace u = f``.

    Pass ``A=None`` to build only the right-hand side (inhomogeneous
    constraints still contribute through the local matrix).
    """
    f = as_function(f)
    if constraints is None:
        constraints = AffineConstraints().close()
    constraints._require_closed()
    need = UpdateFlags.GRADIENTS | UpdateFlags.JXW
    if b is not None:
        need |= UpdateFlags.VALUES | UpdateFlags.QUADRATURE_POINTS
    if (fev.flags & need) != need:
        raise ValueError("FEValues lacks flags needed for assembly")
    mask = constraints.constrained_mask(dh.n_dofs)
    inhom = constraints.is_inhomogeneous()
    table = dh.cell_dofs
    plain_rows, plain_vals = [], []
    for r, cell in enumerate(dh.cells):
        fev.reinit(cell)
        dofs = table[r]
        need_matrix = A is not None or (inhom and mask[dofs].any())
        cell_matrix = local_laplace(fev) if need_matrix else None
        cell_rhs = local_rhs(fev, f) if b is not None else None
        if mask[dofs].any():
            constraints.distribute_local_to_global(cell_matrix, cell_rhs, dofs, A, b)
            continue
        if A is not None:
            plain_rows.append(r)
            plain_vals.append(cell_matrix)
        if b is not None:
            np.add.at(b, dofs, cell_rhs)
    if A is not None and plain_vals:
        # cells without constraints: one batched scatter
        pos = A.pattern.cell_positions(table[plain_rows])
        A.values += np.bincount(pos.ravel(), weights=np.stack(plain_vals).ravel(), minlength=len(A.values))
        A._csr = None


def integrate_errors(dh: DoFHandler, u: np.ndarray, exact, mapping: MappingQ | None = None,
                     n_1d: int | None = None) -> tuple[float, float]:
    """``(||u - exact||_L2, |u - exact|_H1)`` with a Gauss rule of ``p + 2`` points per direction."""
    exact = as_function(exact)
    mapping = mapping or MappingQ(1)
    quad = QGauss(dh.tria.dim, n_1d or dh.fe.degree + 2)
    fev = FEValues(mapping, dh.fe, quad, UpdateFlags.ALL)
    l2 = h1 = 0.0
    for r, cell in enumerate(dh.cells):
        fev.reinit(cell)
        local = u[dh.cell_dofs[r]]
        x = fev.quadrature_points
        w = fev.JxW_values
        e = fev.function_values(local) - exact.value(x)
        ge = fev.function_gradients(local) - exact.gradient(x)
        l2 += float(w @ e**2)
        h1 += float(w @ np.sum(ge**2, axis=1))
    return float(np.sqrt(l2)), float(np.sqrt(h1))
