"""Shape functions evaluated on a concrete cell at quadrature points."""
from __future__ import annotations

import enum

import numpy as np

from .errors import NotActive, NotInitialized, SingularTensor, UpdateFlagError
from .fe import FiniteElementQ, QGauss
from .mapping import MappingQ


class UpdateFlags(enum.Flag):
    NONE = 0
    VALUES = enum.auto()
    GRADIENTS = enum.auto()
    JXW = enum.auto()
    QUADRATURE_POINTS = enum.auto()
    ALL = VALUES | GRADIENTS | JXW | QUADRATURE_POINTS


def checked_inverse(jac: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched inverse and determinant of ``(n, d, d)`` Jacobians."""
    det = np.linalg.det(jac)
    d = jac.shape[-1]
    scale = np.linalg.norm(jac, axis=(-2, -1))
    bad = ~(np.abs(det) > 1e-12 * scale**d)
    if np.any(bad):
        raise SingularTensor(f"degenerate cell: Jacobian determinant {det[bad][0]:.3e}")
    return np.linalg.inv(jac), det


class FEValues:
    """Caching evaluator of real-space shape data on one cell at a time.

    Reference-cell tables (shape values and gradients, mapping basis) are
    computed once at construction. :meth:`reinit` refills the per-cell
    buffers: push-forward gradients ``J^{-T} grad_hat``, ``JxW`` and the
    mapped quadrature points. Only data named in ``flags`` is computed and
    may be queried.
    """

    def __init__(self, mapping: MappingQ, fe: FiniteElementQ, quadrature: QGauss,
                 flags: UpdateFlags = UpdateFlags.ALL):
        if quadrature.dim != fe.dim:
            raise ValueError("quadrature and element dimensions differ")
        self.mapping = mapping
        self.fe = fe
        self.quadrature = quadrature
        self.flags = flags
        self.dofs_per_cell = fe.dofs_per_cell
        self.n_quadrature_points = len(quadrature.weights)
        self.n_reference_tabulations = 0
        self._tabulate()
        self._cell = None

    def _tabulate(self):
        pts = self.quadrature.points
        self.reference_values, self.reference_gradients = self.fe.tabulate(pts)
        self._mapping_tables = self.mapping.reference_tables(self.fe.dim, pts)
        for a in (self.reference_values, self.reference_gradients):
            a.flags.writeable = False
        self.n_reference_tabulations += 1

    def reinit(self, cell) -> None:
        if not cell.is_active():
            raise NotActive(f"{cell!r} is not active")
        self._reinit(cell)

    def _reinit(self, cell):
        flags = self.flags
        box = self.mapping.cell_box(cell)
        if box is not None:
            lower, extent = box
            if flags & UpdateFlags.GRADIENTS:
                self._grads = self.reference_gradients / extent
                self._inverse_jacobians = np.broadcast_to(np.diag(1.0 / extent),
                                                          (self.n_quadrature_points,) + (len(extent),) * 2)
            if flags & UpdateFlags.JXW:
                self._jxw = np.prod(extent) * self.quadrature.weights
            if flags & UpdateFlags.QUADRATURE_POINTS:
                self._points = lower + self.quadrature.points * extent
            self._cell = cell
            return
        x, jac = self.mapping.cell_geometry(cell, self.quadrature.points, self._mapping_tables)
        if flags & (UpdateFlags.GRADIENTS | UpdateFlags.JXW):
            inv, det = checked_inverse(jac)
            self._jacobians = jac
            if flags & UpdateFlags.GRADIENTS:
                self._grads = np.einsum("iqb,qba->iqa", self.reference_gradients, inv)
                self._inverse_jacobians = inv
            if flags & UpdateFlags.JXW:
                self._jxw = np.abs(det) * self.quadrature.weights
        if flags & UpdateFlags.QUADRATURE_POINTS:
            self._points = x
        self._cell = cell

    # ----------------------------------------------------------------- access
    def _need(self, flag):
        if self._cell is None:
            raise NotInitialized("reinit() has not been called")
        if not self.flags & flag:
            raise UpdateFlagError(f"{flag} was not requested at construction")

    def _q(self, q):
        if not 0 <= q < self.n_quadrature_points:
            raise IndexError(f"quadrature point {q} out of range")

    def _i(self, i):
        if not 0 <= i < self.dofs_per_cell:
            raise IndexError(f"shape function {i} out of range")

    @property
    def cell(self):
        return self._cell

    def shape_value(self, i: int, q: int) -> float:
        self._need(UpdateFlags.VALUES)
        self._i(i)
        self._q(q)
        return float(self.reference_values[i, q])

    def shape_grad(self, i: int, q: int) -> np.ndarray:
        self._need(UpdateFlags.GRADIENTS)
        self._i(i)
        self._q(q)
        return self._grads[i, q]

    def JxW(self, q: int) -> float:
        self._need(UpdateFlags.JXW)
        self._q(q)
        return float(self._jxw[q])

    def quadrature_point(self, q: int) -> np.ndarray:
        self._need(UpdateFlags.QUADRATURE_POINTS)
        self._q(q)
        return self._points[q]

    # whole tables, for vectorized cell loops
    @property
    def shape_values(self) -> np.ndarray:
        self._need(UpdateFlags.VALUES)
        return self.reference_values

    @property
    def shape_grads(self) -> np.ndarray:
        self._need(UpdateFlags.GRADIENTS)
        return self._grads

    @property
    def JxW_values(self) -> np.ndarray:
        self._need(UpdateFlags.JXW)
        return self._jxw

    @property
    def quadrature_points(self) -> np.ndarray:
        self._need(UpdateFlags.QUADRATURE_POINTS)
        return self._points

    @property
    def inverse_jacobians(self) -> np.ndarray:
        self._need(UpdateFlags.GRADIENTS)
        return self._inverse_jacobians

    def function_values(self, local_values) -> np.ndarray:
        return np.asarray(local_values) @ self.shape_values

    def function_gradients(self, local_values) -> np.ndarray:
        return np.einsum("i,iqa->qa", np.asarray(local_values), self.shape_grads)
