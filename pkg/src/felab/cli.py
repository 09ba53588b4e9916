"""``felab`` command line: convergence studies, the circle demo, config-driven solves."""
from __future__ import annotations

import argparse
import os
import sys

from .app import circle_demo_mesh, convergence_rows, run_convergence, solution_vertex_field, solve_level
from .config import PROBLEMS, SOLVERS, RunConfig
from .errors import BreakdownError, ConfigError, FelabError, MaxIterations
from .vtk import vtk_write

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _levels(text: str) -> tuple[int, int]:
    try:
        a, b = text.split("..")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must look like A..B, got {text!r}") from None


def _threads(arg_value: int) -> int:
    env = os.environ.get("FELAB_THREADS")
    if env is None:
        return arg_value
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(f"FELAB_THREADS must be an integer, got {env!r}", key="FELAB_THREADS") from None
    if n < 1:
        raise ConfigError("FELAB_THREADS must be at least 1", key="FELAB_THREADS")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="felab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("convergence", help="solve on a sequence of uniform meshes and print a CSV table")
    conv.add_argument("--dim", type=int, default=2, choices=(2, 3))
    conv.add_argument("--degree", type=int, default=1)
    conv.add_argument("--mapping-degree", type=int, default=1)
    conv.add_argument("--levels", type=_levels, default=(3, 6), metavar="A..B")
    conv.add_argument("--problem", default="sinsin", choices=PROBLEMS)
    conv.add_argument("--solver", default="assembled-cg", choices=SOLVERS)
    conv.add_argument("--tol", type=float, default=1e-12)
    conv.add_argument("--out", default=None, help="CSV file (default: stdout only)")
    conv.add_argument("--threads", type=int, default=1)

    demo = sub.add_parser("demo", help="demos")
    demo_sub = demo.add_subparsers(dest="demo", required=True)
    circle = demo_sub.add_parser("circle", help="adaptively refined shell mesh written as VTK")
    circle.add_argument("--steps", type=int, default=3)
    circle.add_argument("--out", required=True)

    solve = sub.add_parser("solve", help="run one solve described by a JSON config")
    solve.add_argument("--config", required=True)
    return parser


def cmd_convergence(args) -> int:
    cfg = RunConfig.from_dict(dict(
        dim=args.dim, degree=args.degree, mapping_degree=args.mapping_degree, min_level=args.levels[0],
        max_level=args.levels[1], problem=args.problem, solver=args.solver, tolerance=args.tol,
        csv_output=args.out, threads=_threads(args.threads)))
    rows = convergence_rows(run_convergence(cfg))
    text = "\n".join(rows) + "\n"
    sys.stdout.write(text)
    if cfg.csv_output:
        with open(cfg.csv_output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_demo_circle(args) -> int:
    if args.steps < 0:
        raise ConfigError("--steps must be non-negative", key="steps")
    tria = circle_demo_mesh(args.steps)
    levels = [float(c.level) for c in tria.active_cells()]
    vtk_write(tria, args.out, cell_data={"level": levels})
    print(f"wrote {args.out}: {tria.n_active_cells} cells, {tria.n_vertices} vertices")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = RunConfig.from_file(args.config)
    cfg.threads = _threads(cfg.threads)
    result = solve_level(cfg, cfg.max_level)
    if cfg.vtk_output:
        levels = [float(c.level) for c in result.tria.active_cells()]
        vtk_write(result.tria, cfg.vtk_output, point_data={"solution": solution_vertex_field(result)},
                  cell_data={"level": levels})
    print(f"n_dofs={result.n_dofs} iterations={result.iterations} residual={result.residual:.3e}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    handlers = {"convergence": cmd_convergence, "demo": cmd_demo_circle, "solve": cmd_solve}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"felab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MaxIterations, BreakdownError, FelabError) as exc:
        print(f"felab: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"felab: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
