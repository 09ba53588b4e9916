"""Adaptive finite elements on quad/hex meshes: hanging nodes, curved geometry,
matrix-free operators and geometric multigrid."""
from .dofs import (
    AffineConstraints,
    DoFHandler,
    distribute_local_to_global,
    interpolate_boundary_values,
    make_hanging_node_constraints,
)
from .fe import FiniteElementQ, QGauss
from .fevalues import FEValues, UpdateFlags
from .grid import Triangulation, create_hyper_cube, create_hyper_shell_2d
from .linalg import JacobiPreconditioner, SparseMatrix, build_sparsity, cg_solve
from .mapping import MappingCartesian, MappingQ
from .matrixfree import LaplaceOperatorMF, build_matrix_free
from .multigrid import ChebyshevSmoother, VCycle, build_hierarchy, mg_preconditioned_cg

__version__ = "0.1.0"

__all__ = [
    "AffineConstraints",
    "ChebyshevSmoother",
    "DoFHandler",
    "FEValues",
    "FiniteElementQ",
    "JacobiPreconditioner",
    "LaplaceOperatorMF",
    "MappingCartesian",
    "MappingQ",
    "QGauss",
    "SparseMatrix",
    "Triangulation",
    "UpdateFlags",
    "VCycle",
    "build_hierarchy",
    "build_matrix_free",
    "build_sparsity",
    "cg_solve",
    "create_hyper_cube",
    "create_hyper_shell_2d",
    "distribute_local_to_global",
    "interpolate_boundary_values",
    "make_hanging_node_constraints",
    "mg_preconditioned_cg",
]
