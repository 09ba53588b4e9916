import json
import subprocess
import sys

import numpy as np
import pytest

from felab.app import CSV_HEADER, circle_demo_mesh, solve_level
from felab.cli import main
from felab.config import RunConfig
from felab.dofs import hanging_face_samples
from felab.errors import ConfigError
from felab.vtk import vtk_read


def _csv(text):
    lines = text.strip().splitlines()
    assert lines[0] == CSV_HEADER
    return [dict(zip(CSV_HEADER.split(","), line.split(","))) for line in lines[1:]]


def _write_config(tmp_path, **kw):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(kw))
    return str(path)


@pytest.mark.parametrize("degree,lo,hi", [(1, 1.9, 2.1), (2, 2.9, 3.1)])
def test_convergence_rates_from_csv(degree, lo, hi, capsys, tmp_path):
    out = tmp_path / "rates.csv"
    code = main(["convergence", "--dim", "2", "--degree", str(degree), "--levels", "3..6", "--out", str(out)])
    assert code == 0
    rows = _csv(capsys.readouterr().out)
    assert out.read_text() == CSV_HEADER + "\n" + "\n".join(
        ",".join(r.values()) for r in rows) + "\n"
    assert [int(r["level"]) for r in rows] == [3, 4, 5, 6]
    assert rows[0]["l2_rate"] == "" and rows[0]["h1_rate"] == ""
    assert lo <= float(rows[-1]["l2_rate"]) <= hi
    assert int(rows[-1]["n_cells"]) == 4**6


def test_mf_and_assembled_errors_agree(capsys):
    main(["convergence", "--degree", "1", "--levels", "3..5", "--solver", "assembled-cg"])
    a = _csv(capsys.readouterr().out)
    main(["convergence", "--degree", "1", "--levels", "3..5", "--solver", "mf-cg"])
    b = _csv(capsys.readouterr().out)
    for ra, rb in zip(a, b):
        for key in ("l2_error", "h1_error"):
            assert abs(float(ra[key]) - float(rb[key])) <= 1e-10


def test_threads_environment_override(capsys, monkeypatch):
    monkeypatch.setenv("FELAB_THREADS", "3")
    assert main(["convergence", "--levels", "3..3", "--solver", "mf-cg"]) == 0
    threaded = _csv(capsys.readouterr().out)
    monkeypatch.setenv("FELAB_THREADS", "1")
    assert main(["convergence", "--levels", "3..3", "--solver", "mf-cg", "--threads", "4"]) == 0
    serial = _csv(capsys.readouterr().out)
    assert threaded[0]["l2_error"] == serial[0]["l2_error"]
    monkeypatch.setenv("FELAB_THREADS", "many")
    assert main(["convergence", "--levels", "3..3"]) == 2
    assert "FELAB_THREADS" in capsys.readouterr().err


def test_gmg_convergence_in_3d(capsys):
    assert main(["convergence", "--dim", "3", "--levels", "1..3", "--solver", "gmg-cg"]) == 0
    rows = _csv(capsys.readouterr().out)
    assert all(int(r["iterations"]) <= 12 for r in rows)


def test_demo_circle_zero_steps(tmp_path, capsys):
    out = tmp_path / "circle.vtk"
    assert main(["demo", "circle", "--steps", "0", "--out", str(out)]) == 0
    data = vtk_read(out)
    assert len(data.cells) == 4 and data.cell_types == [9] * 4
    assert "4 cells" in capsys.readouterr().out


def test_demo_circle_boundary_points_on_circles(tmp_path):
    out = tmp_path / "circle.vtk"
    assert main(["demo", "circle", "--steps", "3", "--out", str(out)]) == 0
    data = vtk_read(out)
    tria = circle_demo_mesh(3)
    on_boundary = set()
    for cell in tria.active_cells():
        for f in range(4):
            face = cell.face(f)
            if face.at_boundary():
                on_boundary.update(face.vertex_indices.tolist())
    r = np.linalg.norm(data.points[sorted(on_boundary), :2], axis=1)
    assert np.minimum(np.abs(r - 0.5), np.abs(r - 1.0)).max() <= 1e-12
    assert np.any(np.abs(r - 0.5) <= 1e-12) and np.any(np.abs(r - 1.0) <= 1e-12)
    assert np.array_equal(data.cell_data["level"], [c.level for c in tria.active_cells()])


def test_demo_growth_is_monotone_in_multiples_of_three():
    counts = [circle_demo_mesh(k).n_active_cells for k in range(5)]
    assert counts[0] == 4
    steps = np.diff(counts)
    assert np.all(steps > 0) and np.all(steps % 3 == 0)


def test_demo_rejects_negative_steps(tmp_path):
    assert main(["demo", "circle", "--steps", "-1", "--out", str(tmp_path / "x.vtk")]) == 2


def test_solve_gmg_level_four(tmp_path, capsys):
    vtk = tmp_path / "u.vtk"
    path = _write_config(tmp_path, degree=1, min_level=4, max_level=4, solver="gmg-cg",
                         vtk_output=str(vtk))
    assert main(["solve", "--config", path]) == 0
    line = capsys.readouterr().out.strip()
    fields = dict(item.split("=") for item in line.split())
    assert set(fields) == {"n_dofs", "iterations", "residual"}
    assert int(fields["n_dofs"]) == 17**2 and int(fields["iterations"]) <= 12
    data = vtk_read(vtk)
    u = data.point_data["solution"]
    # sin(pi x) sin(pi y) at the vertices, up to discretization error
    x, y = data.points[:, 0], data.points[:, 1]
    assert np.abs(u - np.sin(np.pi * x) * np.sin(np.pi * y)).max() <= 1e-2


def test_solve_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"degree": 1,\n "solver": }')
    assert main(["solve", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "line 2" in err
    path = _write_config(tmp_path, degree=1, smoother="jacobi")
    assert main(["solve", "--config", path]) == 2
    assert "smoother" in capsys.readouterr().err
    path = _write_config(tmp_path, degree=9)
    assert main(["solve", "--config", path]) == 2
    assert "degree" in capsys.readouterr().err
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["convergence", "--levels", "3-6"]) == 2


def test_solver_failure_exit_code(tmp_path, capsys):
    path = _write_config(tmp_path, min_level=2, max_level=2, tolerance=1e-30)
    assert main(["solve", "--config", path]) == 3
    assert "solver failed" in capsys.readouterr().err


def test_run_config_validation():
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict({"dim": 3, "problem": "circle-demo"})
    assert info.value.key == "dim"
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"problem": "circle-demo", "solver": "gmg-cg"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"min_level": 4, "max_level": 2})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"tolerance": 2.0})
    with pytest.raises(ConfigError):
        RunConfig.from_dict([1, 2])
    cfg = RunConfig.from_dict({"degree": 2, "tolerance": 1e-8})
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("solver", ["assembled-cg", "mf-cg"])
def test_constant_rhs_on_circle_mesh_is_continuous(solver):
    cfg = RunConfig(problem="circle-demo", solver=solver, degree=2, mapping_degree=2, min_level=3, max_level=3)
    result = solve_level(cfg, 3)
    fine, coarse = hanging_face_samples(result.dof_handler, result.solution)
    assert len(fine) >= 10
    assert np.abs(fine - coarse).max() <= 1e-10
    assert result.solution.max() > 0


def test_module_entry_point(tmp_path):
    out = tmp_path / "c.vtk"
    proc = subprocess.run([sys.executable, "-m", "felab", "demo", "circle", "--steps", "1", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(vtk_read(out).cells) == 16
    proc = subprocess.run([sys.executable, "-m", "felab", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2
