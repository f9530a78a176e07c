"""Command-line drivers.

untangle          solve one problem given rest/init .mesh files
untangle-fixture  write a built-in fixture as rest/init .mesh (+ lock list)

Exit code of `untangle` is 0 iff the final map is fold-free.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

from . import medit
from .fixtures import generate_fixture
from .solver import SolverConfig, UntangleResult, untangle as run_untangle


@dataclass
class RunConfig:
    """Everything one `untangle` invocation needs; echoed into the report."""

    rest: str
    init: str
    out: str
    report: str
    locks: str | None = None
    lam: float = 1.0
    scheme: str = "auto"
    eps_rule: str = "heuristic"
    targets: str = "rest"
    max_outer: int = 500
    threads: int = 1
    figures: str | None = None

    def validate(self) -> None:
        for path in (self.rest, self.init) + ((self.locks,) if self.locks else ()):
            if not os.path.exists(path):
                raise FileNotFoundError(path)
        if self.lam < 0.0:
            raise ValueError("--lambda must be nonnegative")
        for out in (self.out, self.report):
            parent = os.path.dirname(os.path.abspath(out))
            if not os.path.isdir(parent):
                raise FileNotFoundError(f"output directory {parent} does not exist")
            if not os.access(parent, os.W_OK):
                raise PermissionError(f"output directory {parent} is not writable")

    def to_dict(self) -> dict:
        return {
            "rest": self.rest,
            "init": self.init,
            "out": self.out,
            "report": self.report,
            "locks": self.locks,
            "lambda": self.lam,
            "scheme": self.scheme,
            "eps_rule": self.eps_rule,
            "targets": self.targets,
            "max_outer": self.max_outer,
            "threads": self.threads,
        }


def solver_config(config: RunConfig) -> SolverConfig:
    return SolverConfig(
        scheme=config.scheme,
        eps_rule=config.eps_rule,
        lam=config.lam,
        target_policy=config.targets,
        max_outer=config.max_outer,
    )


def write_outputs(config: RunConfig, mesh, result: UntangleResult) -> None:
    """Write the optimized map (.mesh, same connectivity) and the JSON report."""
    medit.write_mesh(
        config.out,
        mesh.dimension,
        result.state.positions(mesh.dimension),
        mesh.elements,
        mesh.element_kinds,
        mesh.locked,
    )
    rep = result.report
    payload = {
        "success": bool(result.success),
        "min_det": rep.min_det,
        "max_stretch": rep.max_stretch,
        "min_det_p95": rep.min_det_p95,
        "max_stretch_p95": rep.max_stretch_p95,
        "iterations": rep.iterations,
        "wall_time_s": rep.wall_time_s,
        "n_vertices": rep.n_vertices,
        "n_elements": rep.n_elements,
        "n_corners": rep.n_corners,
        "trace": result.trace.to_list(),
        "config": config.to_dict(),
        "det_j": [float(v) for v in rep.det_j],
    }
    with open(config.report, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    if config.figures is not None:
        from .figures import render_report_figures

        render_report_figures(config.figures, result)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="untangle",
        description="Compute a foldover-free map of a 2D/3D mesh by "
        "regularized distortion minimization.",
    )
    p.add_argument("--rest", required=True, help="rest-domain .mesh file")
    p.add_argument("--init", required=True, help="initial map .mesh file (same connectivity)")
    p.add_argument("--locks", default=None,
                   help="lock list (one 0-based vertex index per line); "
                   "overrides reference marks from the rest mesh")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="shape/scale trade-off weight (default 1.0)")
    p.add_argument("--scheme", choices=("quasi_newton", "newton", "auto"), default="auto")
    p.add_argument("--eps-rule", choices=("theory", "heuristic"), default="heuristic")
    p.add_argument("--targets", choices=("rest", "regular"), default="rest",
                   help="per-element target shapes: the rest element or the "
                   "unit regular simplex / square corner")
    p.add_argument("--out", required=True, help="optimized map .mesh output")
    p.add_argument("--report", required=True, help="JSON report output")
    p.add_argument("--threads", type=int, default=1,
                   help="recorded in the report; evaluation is vectorized and "
                   "deterministic regardless of thread count")
    p.add_argument("--max-outer", type=int, default=500, help="outer iteration budget")
    p.add_argument("--figures", default=None, metavar="DIR",
                   help="also render convergence/map figures and a per-corner "
                   "CSV into DIR")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    config = RunConfig(
        rest=args.rest,
        init=args.init,
        out=args.out,
        report=args.report,
        locks=args.locks,
        lam=args.lam,
        scheme=args.scheme,
        eps_rule=args.eps_rule,
        targets=args.targets,
        max_outer=args.max_outer,
        threads=args.threads,
        figures=args.figures,
    )
    try:
        config.validate()
        mesh = medit.load_problem(config.rest, config.init, config.locks)
    except (OSError, ValueError) as exc:
        print(f"untangle: {exc}", file=sys.stderr)
        return 2
    result = run_untangle(mesh, solver_config(config))
    write_outputs(config, mesh, result)
    rep = result.report
    status = "fold-free" if result.success else "FAILED (folds remain)"
    print(
        f"{status}: min det J = {rep.min_det:.6g}, max stretch = {rep.max_stretch:.6g}, "
        f"{rep.iterations} outer iterations, {rep.wall_time_s:.2f} s"
    )
    return 0 if result.success else 1


def _fixture_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="untangle-fixture",
        description="Write a built-in fixture as rest/init .mesh files.",
    )
    p.add_argument("name", choices=(
        "point_swap_square", "triangle_fan_12", "cavity_cube", "stretched_bar",
        "unit_square_quads"))
    p.add_argument("--n", type=int, default=8, help="grid resolution where applicable")
    p.add_argument("--angle", type=float, default=45.0, help="cavity_cube rotation (degrees)")
    p.add_argument("--nx", type=int, default=12, help="stretched_bar columns")
    p.add_argument("--ny", type=int, default=3, help="stretched_bar rows")
    p.add_argument("--stretch", type=float, default=2.0, help="stretched_bar pull factor")
    p.add_argument("--out-rest", required=True)
    p.add_argument("--out-init", required=True)
    p.add_argument("--out-locks", default=None)
    return p


def fixture_main(argv=None) -> int:
    args = _fixture_parser().parse_args(argv)
    params = {}
    if args.name == "point_swap_square":
        params = {"n": args.n}
    elif args.name == "cavity_cube":
        params = {"n": args.n, "angle_deg": args.angle}
    elif args.name == "stretched_bar":
        params = {"nx": args.nx, "ny": args.ny, "stretch": args.stretch}
    elif args.name == "unit_square_quads":
        params = {"n": args.n}
    try:
        mesh = generate_fixture(args.name, **params)
    except ValueError as exc:
        print(f"untangle-fixture: {exc}", file=sys.stderr)
        return 2
    medit.write_mesh_pair(args.out_rest, args.out_init, mesh, args.out_locks)
    print(
        f"{args.name}: {mesh.n_vertices} vertices, {len(mesh.elements)} elements, "
        f"{int(mesh.locked.sum())} locked -> {args.out_rest}, {args.out_init}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
