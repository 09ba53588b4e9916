import numpy as np
import pytest

from conftest import random_adaptive_mesh
from felab.assembly import assemble_laplace
from felab.dofs import DoFHandler, interpolate_boundary_values
from felab.errors import LengthMismatch, NotGloballyRefined
from felab.fe import FiniteElementQ, QGauss
from felab.fevalues import FEValues
from felab.grid import create_hyper_cube
from felab.linalg import JacobiPreconditioner, SparseMatrix, build_sparsity, cg_solve
from felab.mapping import MappingQ
from felab.multigrid import (
    ChebyshevSmoother,
    VCycle,
    build_hierarchy,
    chebyshev_apply,
    chebyshev_bound,
    estimate_eigenvalue,
    mg_preconditioned_cg,
    prolongate,
    residual_reduction_rate,
    restrict,
    v_cycle,
)


def _hierarchy(levels, p=1, dim=2, **kw):
    tria = create_hyper_cube(dim)
    tria.refine_global(levels)
    return build_hierarchy(tria, FiniteElementQ(dim, p), **kw)


def _dense(op):
    return np.column_stack([op.vmult(e) for e in np.eye(op.n_dofs)])


def _rhs(h, seed=0):
    b = np.random.default_rng(seed).standard_normal(h.n_dofs(h.n_levels - 1))
    h.constraints[-1].set_zero(b)
    return b


def test_level_dof_counts():
    h = _hierarchy(3)
    assert h.n_levels == 4
    assert [h.n_dofs(level) for level in range(4)] == [4, 9, 25, 81]


def test_adaptive_mesh_rejected():
    with pytest.raises(NotGloballyRefined):
        build_hierarchy(random_adaptive_mesh(2, 1, 0), FiniteElementQ(2, 1))


def test_level_zero_operator_equals_direct_assembly():
    h = _hierarchy(2, p=2)
    dh = DoFHandler(create_hyper_cube(2), FiniteElementQ(2, 2))
    c = interpolate_boundary_values(dh, [0, 1, 2, 3], 0.0).close()
    A = SparseMatrix(build_sparsity(dh, c))
    assemble_laplace(dh, c, FEValues(MappingQ(1), dh.fe, QGauss(2, 3)), 0.0, A, None)
    free = ~c.constrained_mask(dh.n_dofs)
    assert np.array_equal(h.dofs[0].cell_dofs, dh.cell_dofs)
    M0 = _dense(h.operators[0])
    assert np.abs(M0[np.ix_(free, free)] - A.to_dense()[np.ix_(free, free)]).max() <= 1e-13


def test_prolongation_examples():
    h = _hierarchy(2, dirichlet_ids=[])
    for level in range(2):
        ones = prolongate(h, level, np.ones(h.n_dofs(level)))
        assert np.abs(ones - 1).max() <= 1e-15
    # linear function is reproduced, so midpoints are edge averages
    xc = h.dofs[0].support_points()
    xf = h.dofs[1].support_points()
    u = prolongate(h, 0, 1 + 2 * xc[:, 0] - 3 * xc[:, 1])
    assert np.abs(u - (1 + 2 * xf[:, 0] - 3 * xf[:, 1])).max() <= 1e-14
    with pytest.raises(LengthMismatch):
        prolongate(h, 0, np.ones(5))
    with pytest.raises(LengthMismatch):
        restrict(h, 0, np.ones(4))


@pytest.mark.parametrize("p,dim", [(1, 2), (3, 2), (2, 3)])
def test_prolongation_is_function_embedding(p, dim, rng):
    h = _hierarchy(2, p=p, dim=dim, dirichlet_ids=[])
    coarse, fine = h.dofs[1], h.dofs[2]
    x = rng.standard_normal(coarse.n_dofs)
    y = prolongate(h, 1, x)
    fe = coarse.fe
    pts = rng.random((6, dim))
    for cell in list(h.tria.cell_iterators_on_level(1))[:4]:
        for child in cell.children():
            j = child.child_number
            bits = np.array([(j >> a) & 1 for a in range(dim)])
            vals_c, _ = fe.tabulate(0.5 * (pts + bits))
            vals_f, _ = fe.tabulate(pts)
            uc = x[coarse.cell_dof_indices(cell)] @ vals_c
            uf = y[fine.cell_dof_indices(child)] @ vals_f
            assert np.abs(uc - uf).max() <= 1e-13


def test_restriction_is_transpose(rng):
    h = _hierarchy(3, p=2)
    for level in range(3):
        x = rng.standard_normal(h.n_dofs(level))
        y = rng.standard_normal(h.n_dofs(level + 1))
        assert abs(h.prolongate(level, x) @ y - x @ h.restrict(level, y)) <= 1e-12 * np.linalg.norm(x) * \
            np.linalg.norm(y)


def test_galerkin_property():
    h = _hierarchy(4)
    for level in range(3):
        if h.n_dofs(level + 1) > 289:
            break
        P = h.transfers[level].toarray()
        Af, Ac = _dense(h.operators[level + 1]), _dense(h.operators[level])
        free = ~h.constraints[level].constrained_mask(h.n_dofs(level))
        if not free.any():
            continue
        assert np.abs((P.T @ Af @ P)[np.ix_(free, free)] - Ac[np.ix_(free, free)]).max() <= 1e-10


def test_eigenvalue_estimate_examples():
    est = estimate_eigenvalue(np.eye(20), np.ones(20))
    assert 1.0 <= est <= 1.2
    D = np.diag(np.arange(1.0, 11.0))
    est = estimate_eigenvalue(D, np.ones(10))
    assert 9.5 <= est <= 12.0
    assert est == estimate_eigenvalue(D, np.ones(10))


@pytest.mark.parametrize("degree", [2, 4, 6])
def test_chebyshev_damps_every_eigencomponent(degree):
    lam = np.arange(1.0, 11.0)
    D = np.diag(lam)
    sm = ChebyshevSmoother(D, np.ones(10), degree=degree, lambda_max=12.0)
    lo, hi = sm.interval
    bound = chebyshev_bound(lo, hi, degree)
    for i in np.flatnonzero((lam >= lo) & (lam <= hi)):
        x = np.zeros(10)
        x[i] = 1.0
        chebyshev_apply(sm, D, np.zeros(10), x)
        assert abs(x[i]) <= bound + 1e-10
        assert np.count_nonzero(x) == 1
    # scalar oracle: the error polynomial is T_k((theta - lam)/delta) / T_k(theta/delta)
    theta, delta = (hi + lo) / 2, (hi - lo) / 2
    x = np.ones(10)
    sm.apply(np.zeros(10), x)
    expect = np.cos(degree * np.arccos(np.clip((theta - lam) / delta, -1, 1)))
    outside = np.abs((theta - lam) / delta) > 1
    expect[outside] = np.cosh(degree * np.arccosh(np.abs((theta - lam[outside]) / delta))) * \
        np.sign((theta - lam[outside]) / delta) ** degree
    expect /= np.cosh(degree * np.arccosh(theta / delta))
    assert np.abs(x - expect).max() <= 1e-12


def test_chebyshev_degree_one_is_damped_jacobi(rng):
    A = rng.standard_normal((8, 8))
    A = A @ A.T + 8 * np.eye(8)
    d = np.diag(A).copy()
    sm = ChebyshevSmoother(A, d, degree=1, lambda_max=3.0)
    lo, hi = sm.interval
    b, x0 = rng.standard_normal((2, 8))
    x = x0.copy()
    sm.apply(b, x)
    omega = 2.0 / (lo + hi)
    assert np.abs(x - (x0 + omega * (b - A @ x0) / d)).max() <= 1e-14
    z = np.zeros(8)
    sm.apply(np.zeros(8), z)
    assert not z.any()


def test_one_level_hierarchy_is_coarse_solve():
    tria = create_hyper_cube(2, subdivisions=6)
    h = build_hierarchy(tria, FiniteElementQ(2, 2))
    assert h.n_levels == 1
    b = _rhs(h)
    for kind in ("dense", "cg"):
        vc = VCycle(h, coarse_solver=kind)
        x = vc.vmult(b)
        assert np.linalg.norm(h.operators[0].vmult(x) - b) <= 1e-11 * np.linalg.norm(b)
    assert not VCycle(h).vmult(np.zeros_like(b)).any()


def test_v_cycle_is_linear(rng):
    vc = VCycle(_hierarchy(4))
    b1, b2 = _rhs(vc.h, 1), _rhs(vc.h, 2)
    lhs = vc.vmult(2.5 * b1 - 0.7 * b2)
    rhs = 2.5 * vc.vmult(b1) - 0.7 * vc.vmult(b2)
    assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(lhs).max()
    with pytest.raises(LengthMismatch):
        vc.vmult(np.ones(3))


def test_v_cycle_with_start_vector():
    vc = VCycle(_hierarchy(3))
    b = _rhs(vc.h)
    x = v_cycle(vc, b)
    x2 = v_cycle(vc, b, x)
    A = vc.h.operators[-1]
    assert np.linalg.norm(b - A.vmult(x2)) < np.linalg.norm(b - A.vmult(x))


@pytest.mark.parametrize("p,limit", [(1, 0.15), (3, 0.25)])
def test_rates_bounded_and_mesh_independent(p, limit):
    rates = []
    for levels in (3, 4, 5):
        vc = VCycle(_hierarchy(levels, p=p))
        rates.append(residual_reduction_rate(vc, _rhs(vc.h)))
    assert max(rates) <= limit
    assert max(rates) - min(rates) <= 0.03


def test_mg_cg_beats_jacobi_and_matches_dense_solve():
    iters = []
    for levels in (3, 4, 5):
        h = _hierarchy(levels)
        b = _rhs(h)
        vc = VCycle(h)
        res = mg_preconditioned_cg(vc, None, b, 1e-10)
        iters.append(res.iterations)
        A = h.operators[-1]
        if levels == 3:
            ref = np.linalg.solve(_dense(A), b)
            assert np.abs(res.x - ref).max() <= 1e-8
        if levels == 5:
            jac = cg_solve(A, b, JacobiPreconditioner(A.diagonal()), 1e-10, max_iter=5000)
            assert res.iterations < jac.iterations
    assert max(iters) <= 12 and max(iters) - min(iters) <= 2


def test_single_precision_smoother():
    h = _hierarchy(4, smoother_dtype=np.float32)
    assert h.smoother_operators[-1].data.dtype == np.float32
    b = _rhs(h)
    res = mg_preconditioned_cg(VCycle(h), None, b, 1e-10)
    assert res.iterations <= 12
    assert np.linalg.norm(h.operators[-1].vmult(res.x) - b) <= 1e-10 * np.linalg.norm(b)


def test_three_dimensional_q2_mg_cg():
    h = _hierarchy(2, p=2, dim=3)
    res = mg_preconditioned_cg(VCycle(h), None, _rhs(h), 1e-10)
    assert res.iterations <= 15
