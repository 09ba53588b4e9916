import numpy as np
import pytest

from felab.dofs import AffineConstraints, DoFHandler, interpolate_boundary_values, make_hanging_node_constraints
from felab.grid import create_hyper_cube


def corner_refined_mesh(dim=2):
    """2^dim grid with cell 0 refined once (7 active cells in 2d)."""
    tria = create_hyper_cube(dim, subdivisions=2)
    tria.cell(0, 0).set_refine_flag()
    tria.execute_refinement()
    return tria


def random_adaptive_mesh(dim, rounds, seed, fraction=0.3, start=1):
    rng = np.random.default_rng(seed)
    tria = create_hyper_cube(dim)
    tria.refine_global(start)
    for _ in range(rounds):
        cells = tria.active_cells()
        for c in cells:
            if rng.random() < fraction:
                c.set_refine_flag()
        tria.execute_refinement()
    return tria


def hanging_mesh(dim, rounds, seed):
    """Random adaptive mesh that is guaranteed to contain hanging faces."""
    tria = random_adaptive_mesh(dim, rounds, seed)
    if tria.is_globally_refined():
        tria.active_cells()[0].set_refine_flag()
        tria.execute_refinement()
    return tria


def all_boundary_ids(tria):
    b = tria.levels[0].boundary
    return sorted(int(v) for v in np.unique(b[b >= 0]))


def laplace_constraints(dh, mapping=None, dirichlet=True) -> AffineConstraints:
    c = make_hanging_node_constraints(dh)
    if dirichlet:
        c = interpolate_boundary_values(dh, all_boundary_ids(dh.tria), 0.0, c, mapping)
    return c.close()


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


__all__ = ["DoFHandler", "corner_refined_mesh", "random_adaptive_mesh", "laplace_constraints"]


def box_adjacency_level_jumps(tria):
    """Level differences of all pairs of active box cells sharing a face, found geometrically.

    Independent of the mesh's neighbor links: two boxes share a face when they
    touch along one axis and overlap with positive measure in all others.
    """
    cells = tria.active_cells()
    lo = np.array([c.vertices.min(axis=0) for c in cells])
    hi = np.array([c.vertices.max(axis=0) for c in cells])
    lev = np.array([c.level for c in cells])
    tol = 1e-12
    jumps = []
    for i in range(len(cells)):
        for a in range(tria.dim):
            touch = np.abs(lo[:, a] - hi[i, a]) < tol
            others = [b for b in range(tria.dim) if b != a]
            overlap = np.ones(len(cells), dtype=bool)
            for b in others:
                overlap &= (np.minimum(hi[:, b], hi[i, b]) - np.maximum(lo[:, b], lo[i, b])) > tol
            for j in np.flatnonzero(touch & overlap):
                jumps.append(abs(int(lev[i]) - int(lev[j])))
    return jumps


_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        props = dict(report.user_properties)
        test = report.nodeid.split("::")[-1]
        number, _, words = test.removeprefix("test_criterion_").partition("_")
        _ACCEPTANCE.append((int(number) if number.isdigit() else 0, f"{number}. {words.replace('_', ' ')}",
                            report.outcome,
                            report.duration, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, name, outcome, seconds, detail in sorted(_ACCEPTANCE):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  ({seconds:.1f} s)  {detail}")
