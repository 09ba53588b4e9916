"""Acceptance suite: one test per criterion, each at its stated tolerance and time limit.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from conftest import box_adjacency_level_jumps, hanging_mesh, laplace_constraints, random_adaptive_mesh
from felab.app import observed_rates, run_convergence
from felab.assembly import assemble_laplace, local_laplace
from felab.config import RunConfig
from felab.dofs import DoFHandler, hanging_face_samples, make_hanging_node_constraints
from felab.fe import FiniteElementQ, QGauss
from felab.fevalues import FEValues, UpdateFlags
from felab.grid import create_hyper_cube, create_hyper_shell_2d
from felab.linalg import JacobiPreconditioner, SparseMatrix, build_sparsity, cg_solve
from felab.mapping import MappingQ
from felab.matrixfree import LaplaceOperatorMF, build_matrix_free
from felab.multigrid import VCycle, build_hierarchy, mg_preconditioned_cg, residual_reduction_rate
from felab.vtk import VTK_CORNER_ORDER, vtk_read, vtk_write


@pytest.fixture
def report(record_property):
    def _report(number, name, detail):
        record_property("detail", detail)
        print(f"criterion {number} ({name}): {detail}")
    return _report


def _equivalence_meshes():
    for dim in (2, 3):
        for p in (1, 2, 3, 4):
            uniform = create_hyper_cube(dim)
            uniform.refine_global({2: {1: 5, 2: 4, 3: 3, 4: 3}, 3: {1: 3, 2: 2, 3: 1, 4: 1}}[dim][p])
            yield dim, p, "uniform", uniform
            rounds = 2 if dim == 2 else 1
            yield dim, p, "adaptive", hanging_mesh(dim, rounds, seed=100 + 10 * dim + p)


def test_criterion_1_operator_equivalence(report):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst, largest, n_cases = 0.0, 0, 0
    for dim, p, kind, tria in _equivalence_meshes():
        mapping = MappingQ(1)
        dh = DoFHandler(tria, FiniteElementQ(dim, p))
        assert dh.n_dofs <= 5000
        largest = max(largest, dh.n_dofs)
        c = laplace_constraints(dh)
        if kind == "adaptive":
            assert any(tria.neighbor(cell, f).kind == "coarser" for cell in dh.cells for f in range(2 * dim))
        quad = QGauss(dim, p + 1)
        A = SparseMatrix(build_sparsity(dh, c))
        assemble_laplace(dh, c, FEValues(mapping, dh.fe, quad), 0.0, A, None)
        op = LaplaceOperatorMF(build_matrix_free(dh, c, mapping, quad))
        cons = c.constrained_dofs()
        for _ in range(10):
            x = rng.standard_normal(dh.n_dofs)
            ref = A.vmult(x)
            ref[cons] = x[cons]
            worst = max(worst, np.linalg.norm(op.vmult(x) - ref) / np.linalg.norm(ref))
        n_cases += 1
    elapsed = time.perf_counter() - start
    report(1, "operator equivalence", f"{n_cases} cases, max rel err {worst:.2e}, max n_dofs {largest}")
    assert worst <= 1e-11
    assert elapsed < 30


def test_criterion_2_convergence_rates(report):
    start = time.perf_counter()
    summary = []
    ok = True
    for p in (1, 2, 3):
        results = run_convergence(RunConfig(dim=2, degree=p, min_level=3, max_level=6, problem="sinsin"))
        l2, h1 = observed_rates(results)[-1]
        summary.append(f"p={p}: L2 {l2:.3f} H1 {h1:.3f}")
        ok &= abs(l2 - (p + 1)) <= 0.1 and abs(h1 - p) <= 0.1
    elapsed = time.perf_counter() - start
    report(2, "convergence rates", "; ".join(summary))
    assert ok
    assert elapsed < 60


def test_criterion_3_multigrid_mesh_independence(report):
    start = time.perf_counter()
    rates, iters = [], []
    for level in (3, 4, 5, 6):
        tria = create_hyper_cube(2)
        tria.refine_global(level)
        h = build_hierarchy(tria, FiniteElementQ(2, 1))
        vc = VCycle(h, degree=6)
        b = np.random.default_rng(level).standard_normal(h.n_dofs(level))
        h.constraints[-1].set_zero(b)
        rates.append(residual_reduction_rate(vc, b, n_cycles=10))
        iters.append(mg_preconditioned_cg(vc, None, b, 1e-10).iterations)
    elapsed = time.perf_counter() - start
    report(3, "multigrid", f"rates {[round(r, 4) for r in rates]}, GMG-CG iterations {iters}")
    assert max(rates) <= 0.15
    assert max(rates) - min(rates) <= 0.03
    assert max(iters) <= 12 and max(iters) - min(iters) <= 2
    assert elapsed < 60


def test_criterion_4_local_stiffness(report):
    expect = np.array([[4, -1, -1, -2], [-1, 4, -2, -1], [-1, -2, 4, -1], [-2, -1, -1, 4]]) / 6
    fev = FEValues(MappingQ(1), FiniteElementQ(2, 1), QGauss(2, 2), UpdateFlags.GRADIENTS | UpdateFlags.JXW)
    fev.reinit(create_hyper_cube(2).cell(0, 0))
    err = np.abs(local_laplace(fev) - expect).max()
    report(4, "local stiffness", f"max abs err {err:.1e}")
    assert err <= 1e-14


def test_criterion_5_geometry_fidelity(report):
    r_i, r_o = 0.5, 1.0
    tria = create_hyper_shell_2d((0.0, 0.0), r_i, r_o, 4)
    tria.refine_global(4)
    radius_err = 0.0
    for cell in tria.active_cells():
        for f in range(4):
            face = cell.face(f)
            if face.at_boundary():
                r = np.linalg.norm(face.vertices, axis=1)
                radius_err = max(radius_err, np.minimum(np.abs(r - r_i), np.abs(r - r_o)).max())
    fev = FEValues(MappingQ(2), FiniteElementQ(2, 1), QGauss(2, 3), UpdateFlags.JXW)
    area = 0.0
    for cell in tria.active_cells():
        fev.reinit(cell)
        area += fev.JxW_values.sum()
    exact = math.pi * (r_o**2 - r_i**2)
    rel = abs(area - exact) / exact
    report(5, "geometry fidelity", f"max radius err {radius_err:.1e}, area rel err {rel:.1e}")
    assert radius_err <= 1e-12
    assert rel <= 5e-3


def test_criterion_6_hanging_node_conformity(report):
    worst_poly, worst_jump = 0.0, 0.0
    rng = np.random.default_rng(6)
    for dim, p, seed in [(2, 1, 1), (2, 2, 2), (2, 3, 3), (2, 4, 4), (3, 1, 5), (3, 2, 6)]:
        tria = hanging_mesh(dim, 2 if dim == 2 else 1, seed)
        dh = DoFHandler(tria, FiniteElementQ(dim, p))
        hanging = make_hanging_node_constraints(dh).close()
        assert len(hanging) > 0
        pts = dh.support_points()
        coef = rng.standard_normal((p + 1,) * dim)
        exact = np.zeros(dh.n_dofs)
        for idx in np.ndindex(coef.shape):
            if sum(idx) <= p:
                exact += coef[idx] * np.prod(pts ** np.array(idx), axis=1)
        u = exact.copy()
        u[hanging.constrained_dofs()] = 0.0
        hanging.distribute(u)
        worst_poly = max(worst_poly, np.abs(u - exact).max())

        c = laplace_constraints(dh)
        A = SparseMatrix(build_sparsity(dh, c))
        b = np.zeros(dh.n_dofs)
        assemble_laplace(dh, c, FEValues(MappingQ(1), dh.fe, QGauss(dim, p + 1)), 1.0, A, b)
        sol = cg_solve(A, b, JacobiPreconditioner(A.diagonal()), 1e-12, max_iter=10_000).x
        c.distribute(sol)
        fine, coarse = hanging_face_samples(dh, sol, n_points=10, seed=seed)
        worst_jump = max(worst_jump, np.abs(fine - coarse).max())
    report(6, "hanging-node conformity", f"polynomial err {worst_poly:.1e}, face jump {worst_jump:.1e}")
    assert worst_poly <= 1e-11
    assert worst_jump <= 1e-10


def _link_level_jumps_ok(tria):
    """Exhaustive face check through neighbor links: no active cell faces a refined cell whose children
    on the shared face are refined again."""
    dim = tria.dim
    for cell in tria.active_cells():
        for f in range(2 * dim):
            info = tria.neighbor(cell, f)
            if info.kind == "coarser" and info.cell.level != cell.level - 1:
                return False
            if info.kind == "same_level" and info.cell.has_children():
                a, s = divmod(f, 2)
                for child in info.cell.children():
                    # children of the neighbor that touch the shared face
                    if ((child.child_number >> a) & 1) == 1 - s and child.has_children():
                        return False
    return True


def test_criterion_7_refinement_and_balance(report):
    rng = np.random.default_rng(7)
    checked_faces, max_jump, ok = 0, 0, True
    for round_no in range(50):
        dim = 2 if round_no % 2 == 0 else 3
        tria = create_hyper_cube(dim)
        tria.refine_global(1)
        for _ in range(4 if dim == 2 else 2):
            before = tria.n_active_cells
            cells = tria.active_cells()
            picks = rng.choice(len(cells), size=int(rng.integers(1, max(2, len(cells) // 4))), replace=False)
            for i in picks:
                cells[i].set_refine_flag()
            tria.execute_refinement()
            # every refinement replaces one cell by 2^dim children
            ok &= (tria.n_active_cells - before) % (2**dim - 1) == 0
        jumps = box_adjacency_level_jumps(tria)
        checked_faces += len(jumps)
        max_jump = max(max_jump, max(jumps))
        ok &= _link_level_jumps_ok(tria)
    report(7, "refinement and balance", f"50 rounds, {checked_faces} face pairs, max level jump {max_jump}")
    assert ok
    assert max_jump <= 1


def test_criterion_8_sum_factorization_complexity(report):
    sf, dense = {}, {}
    for p in (2, 4):
        tria = create_hyper_cube(3)
        dh = DoFHandler(tria, FiniteElementQ(3, p))
        c = laplace_constraints(dh, dirichlet=False)
        data = build_matrix_free(dh, c, MappingQ(1), QGauss(3, p + 1))
        sf[p] = LaplaceOperatorMF(data).count_cell_ops()
        dense[p] = LaplaceOperatorMF(data, sum_factorization=False).count_cell_ops()
    ratio, predicted = sf[4] / sf[2], (5 / 3) ** 4
    dense_ratio, dense_predicted = dense[4] / dense[2], (5 / 3) ** 6
    report(8, "sum factorization", f"ops p=2 {sf[2]}, p=4 {sf[4]}, ratio {ratio:.2f} vs {predicted:.2f}; "
                                   f"dense ratio {dense_ratio:.2f} vs {dense_predicted:.2f}")
    assert predicted / 1.5 <= ratio <= predicted * 1.5
    assert dense_predicted / 1.5 <= dense_ratio <= dense_predicted * 1.5


def test_criterion_9_vtk_conformance(tmp_path, report):
    checks = 0
    for dim in (2, 3):
        tria = create_hyper_shell_2d() if dim == 2 else random_adaptive_mesh(3, 1, seed=9)
        if dim == 2:
            tria.refine_global(2)
        rng = np.random.default_rng(dim)
        point = rng.standard_normal(tria.n_vertices)
        cell = rng.standard_normal(tria.n_active_cells)
        path = tmp_path / f"mesh{dim}.vtk"
        vtk_write(tria, path, point_data={"u": point}, cell_data={"c": cell})
        data = vtk_read(path)
        assert np.array_equal(data.points[:, :dim], tria.vertices)
        assert np.array_equal(data.point_data["u"], point)
        assert np.array_equal(data.cell_data["c"], cell)
        assert set(data.cell_types) == {9 if dim == 2 else 12}
        order = list(VTK_CORNER_ORDER[dim])
        assert order == ([0, 1, 3, 2] if dim == 2 else [0, 1, 3, 2, 4, 5, 7, 6])
        assert data.cells == [c.vertex_indices[order].tolist() for c in tria.active_cells()]
        vtk_write(create_hyper_cube(dim), tmp_path / "unit.vtk")
        assert vtk_read(tmp_path / "unit.vtk").cells == [order]
        checks += 1
    report(9, "VTK conformance", f"{checks} meshes round-tripped bitwise")
