"""Problem setup and solve pipeline shared by the CLI and the tests."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .assembly import assemble_laplace, integrate_errors
from .config import RunConfig
from .dofs import DoFHandler, interpolate_boundary_values, make_hanging_node_constraints
from .fe import FiniteElementQ, QGauss
from .fevalues import FEValues
from .functions import ConstantFunction, SinSinRHS, SinSinSolution
from .grid import create_hyper_cube, create_hyper_shell_2d
from .grid.triangulation import Triangulation
from .linalg import JacobiPreconditioner, SparseMatrix, build_sparsity, cg_solve
from .mapping import MappingQ
from .matrixfree import LaplaceOperatorMF, build_matrix_free
from .multigrid import VCycle, build_hierarchy, mg_preconditioned_cg

SHELL_INNER_RADIUS = 0.5
SHELL_OUTER_RADIUS = 1.0


def refine_near_inner_boundary(tria: Triangulation, r_inner: float = SHELL_INNER_RADIUS,
                               center=(0.0, 0.0)) -> int:
    """Flag and refine the active cells whose centers are closest to the inner circle."""
    cells = tria.active_cells()
    dist = np.array([abs(np.linalg.norm(c.center() - center) - r_inner) for c in cells])
    near = dist <= dist.min() * (1 + 1e-6) + 1e-14
    for c, flag in zip(cells, near):
        if flag:
            c.set_refine_flag()
    tria.execute_refinement()
    return int(near.sum())


def circle_demo_mesh(steps: int) -> Triangulation:
    if steps < 0:
        raise ValueError("refinement steps must be non-negative")
    tria = create_hyper_shell_2d(r_inner=SHELL_INNER_RADIUS, r_outer=SHELL_OUTER_RADIUS)
    for _ in range(steps):
        refine_near_inner_boundary(tria)
    return tria


def problem_mesh(cfg: RunConfig, level: int) -> Triangulation:
    if cfg.problem == "circle-demo":
        return circle_demo_mesh(level)
    tria = create_hyper_cube(cfg.dim)
    tria.refine_global(level)
    return tria


def problem_data(cfg: RunConfig):
    """``(rhs, exact solution or None)``."""
    if cfg.problem == "sinsin":
        return SinSinRHS(), SinSinSolution()
    return ConstantFunction(1.0), None


@dataclass
class LevelResult:
    level: int
    n_cells: int
    n_dofs: int
    l2_error: float | None
    h1_error: float | None
    iterations: int
    residual: float
    seconds: float
    tria: Triangulation
    dof_handler: DoFHandler
    solution: np.ndarray


def solve_level(cfg: RunConfig, level: int) -> LevelResult:
    start = time.perf_counter()
    tria = problem_mesh(cfg, level)
    fe = FiniteElementQ(cfg.dim, cfg.degree)
    mapping = MappingQ(cfg.mapping_degree)
    quad = QGauss(cfg.dim, cfg.degree + 1)
    f, exact = problem_data(cfg)
    ids = sorted({int(b) for b in np.unique(tria.levels[0].boundary) if b >= 0})

    if cfg.solver == "gmg-cg":
        h = build_hierarchy(tria, fe, mapping, dirichlet_ids=ids, threads=cfg.threads)
        dh, constraints = h.dofs[-1], h.constraints[-1]
        op = h.operators[-1]
    else:
        dh = DoFHandler(tria, fe)
        constraints = make_hanging_node_constraints(dh)
        constraints = interpolate_boundary_values(dh, ids, 0.0, constraints, mapping).close()

    fev = FEValues(mapping, fe, quad)
    b = np.zeros(dh.n_dofs)
    if cfg.solver == "assembled-cg":
        A = SparseMatrix(build_sparsity(dh, constraints))
        assemble_laplace(dh, constraints, fev, f, A, b)
        result = cg_solve(A, b, JacobiPreconditioner(A.diagonal()), cfg.tolerance, max_iter=20 * dh.n_dofs)
    elif cfg.solver == "mf-cg":
        op = LaplaceOperatorMF(build_matrix_free(dh, constraints, mapping, quad), threads=cfg.threads)
        assemble_laplace(dh, constraints, fev, f, None, b)
        result = cg_solve(op, b, JacobiPreconditioner(op.diagonal()), cfg.tolerance, max_iter=20 * dh.n_dofs)
    else:
        assemble_laplace(dh, constraints, fev, f, None, b)
        result = mg_preconditioned_cg(VCycle(h), op, b, cfg.tolerance)
    u = result.x
    constraints.distribute(u)
    l2 = h1 = None
    if exact is not None:
        l2, h1 = integrate_errors(dh, u, exact, mapping)
    return LevelResult(level, tria.n_active_cells, dh.n_dofs, l2, h1, result.iterations, result.final_residual,
                       time.perf_counter() - start, tria, dh, u)


CSV_HEADER = "level,n_cells,n_dofs,l2_error,l2_rate,h1_error,h1_rate,iterations,seconds"


def _rate(prev, cur):
    if prev is None or cur is None or prev <= 0 or cur <= 0:
        return ""
    return f"{math.log2(prev / cur):.4f}"


def _num(x):
    return "" if x is None else f"{x:.10e}"


def convergence_rows(results: list[LevelResult]) -> list[str]:
    rows = [CSV_HEADER]
    prev = None
    for r in results:
        rows.append(",".join([
            str(r.level), str(r.n_cells), str(r.n_dofs),
            _num(r.l2_error), _rate(prev and prev.l2_error, r.l2_error),
            _num(r.h1_error), _rate(prev and prev.h1_error, r.h1_error),
            str(r.iterations), f"{r.seconds:.3f}",
        ]))
        prev = r
    return rows


def observed_rates(results: list[LevelResult]) -> list[tuple[float, float]]:
    out = []
    for a, b in zip(results, results[1:]):
        out.append((math.log2(a.l2_error / b.l2_error), math.log2(a.h1_error / b.h1_error)))
    return out


def run_convergence(cfg: RunConfig) -> list[LevelResult]:
    return [solve_level(cfg, level) for level in range(cfg.min_level, cfg.max_level + 1)]


def solution_vertex_field(result: LevelResult) -> np.ndarray:
    field = np.zeros(result.tria.n_vertices)
    vd = result.dof_handler.vertex_dofs()
    used = vd >= 0
    field[used] = result.solution[vd[used]]
    return field
