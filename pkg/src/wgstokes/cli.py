"""Command-line driver: convergence studies, stability probes, mesh checks.

Subcommands:

  solve       run a convergence study and write rates.csv / rates.md /
              summary.json / convergence.png (plus optional VTK exports)
  probe       norm-equivalence and inf-sup probes, JSON output
  mesh-check  build (or load) a mesh and run the validator

Levels are given as an inclusive exponent range A..B; level i uses n = 2^i
subdivisions per side.  Exit codes: 0 success, 1 solver/module failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import report
from .exceptions import WgStokesError
from .mesh import FAMILIES, build_mesh, load_mesh_text, validate_mesh
from .verification import (
    PROBLEMS,
    get_problem,
    probe_infsup,
    probe_norm_equivalence,
    run_convergence,
)
from .weakops import ElementFactory


def _parse_levels(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = text.split("..")
            lo, hi = int(lo), int(hi)
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"levels must look like A..B or A, got {text!r}") from None
    if hi < lo or lo < 0:
        raise argparse.ArgumentTypeError(f"empty or negative level range {text!r}")
    return list(range(lo, hi + 1))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wgstokes",
        description="Stabilizer-free weak Galerkin Stokes solver on polygonal meshes")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run a convergence study")
    solve.add_argument("--problem", choices=sorted(PROBLEMS), default="s1")
    solve.add_argument("--mesh", choices=FAMILIES, default="tri")
    solve.add_argument("--order", type=int, choices=(1, 2, 3), default=1)
    solve.add_argument("--levels", type=_parse_levels, default=[2, 3, 4],
                       metavar="A..B", help="refinement levels; n = 2^level")
    solve.add_argument("--out", default="out", help="output directory")
    solve.add_argument("--solver", choices=("direct", "minres"), default="direct")
    solve.add_argument("--quad-degree", type=int, default=None,
                       help="raise the quadrature exactness degree")
    solve.add_argument("--seed", type=int, default=0,
                       help="seed for any randomized diagnostics")
    solve.add_argument("--export-vtk", action="store_true",
                       help="write a per-level VTK file with cell-averaged fields")
    solve.add_argument("--no-plot", action="store_true",
                       help="skip the convergence figure")

    probe = sub.add_parser("probe", help="empirical stability probes")
    probe.add_argument("--norm-equivalence", action="store_true")
    probe.add_argument("--infsup", action="store_true")
    probe.add_argument("--mesh", choices=FAMILIES, default="tri")
    probe.add_argument("--order", type=int, choices=(1, 2, 3), default=1)
    probe.add_argument("--levels", type=_parse_levels, default=[2, 3, 4],
                       metavar="A..B")
    probe.add_argument("--samples", type=int, default=20)
    probe.add_argument("--seed", type=int, default=0)
    probe.add_argument("--out", default=None,
                       help="directory for probe.json (default: print to stdout)")

    check = sub.add_parser("mesh-check", help="build or load a mesh and validate it")
    check.add_argument("--mesh", choices=FAMILIES, default=None)
    check.add_argument("--levels", type=_parse_levels, default=[2, 3],
                       metavar="A..B")
    check.add_argument("--file", default=None, help="validate a mesh text file instead")
    return parser


def _cmd_solve(args) -> int:
    t0 = time.perf_counter()
    ns = [2 ** lvl for lvl in args.levels]
    table = run_convergence(args.problem, args.mesh, args.order, ns,
                            labels=args.levels, solver=args.solver,
                            quad_degree=args.quad_degree)
    config = {
        "command": "solve", "problem": args.problem, "mesh": args.mesh,
        "order": args.order, "levels": args.levels, "solver": args.solver,
        "quad_degree": args.quad_degree, "seed": args.seed,
        "export_vtk": bool(args.export_vtk), "out": args.out,
    }
    timings = {"total_s": time.perf_counter() - t0}
    paths = report.write_run_artifacts(args.out, table, config,
                                       timings=timings, plot=not args.no_plot)
    if args.export_vtk:
        exact = get_problem(args.problem)
        for lvl, n in zip(args.levels, ns):
            mesh = build_mesh(args.mesh, n)
            factory = ElementFactory(mesh, args.order,
                                     vol_degree=args.quad_degree,
                                     err_degree=args.quad_degree)
            from .assembly import solve_stokes
            result, _ = solve_stokes(mesh, args.order, exact.forcing,
                                     g=exact.velocity, method=args.solver,
                                     factory=factory)
            vtk_path = os.path.join(args.out, f"solution_level{lvl}.vtk")
            report.export_vtk(mesh, result, factory, vtk_path)
    sys.stdout.write(report.to_markdown(table))
    sys.stdout.write(f"artifacts written to {args.out}\n")
    for key in ("csv", "markdown", "json", "figure"):
        if key in paths:
            sys.stdout.write(f"  {paths[key]}\n")
    return 0


def _cmd_probe(args) -> int:
    if not (args.norm_equivalence or args.infsup):
        raise WgStokesError("nothing to probe: pass --norm-equivalence and/or --infsup")
    out: dict = {"config": {
        "command": "probe", "mesh": args.mesh, "order": args.order,
        "levels": args.levels, "samples": args.samples, "seed": args.seed,
    }}
    if args.norm_equivalence:
        per_level = {}
        for lvl in args.levels:
            mesh = build_mesh(args.mesh, 2 ** lvl)
            stats = probe_norm_equivalence(mesh, args.order,
                                           n_samples=args.samples, seed=args.seed)
            per_level[str(lvl)] = {"min": stats["min"], "max": stats["max"],
                                   "n_samples": stats["n_samples"]}
        out["norm_equivalence"] = per_level
    if args.infsup:
        per_level = {}
        for lvl in args.levels:
            mesh = build_mesh(args.mesh, 2 ** lvl)
            per_level[str(lvl)] = probe_infsup(mesh, args.order)
        out["infsup"] = per_level
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "probe.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        sys.stdout.write(f"probe results written to {path}\n")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_mesh_check(args) -> int:
    meshes = []
    if args.file:
        meshes.append((args.file, load_mesh_text(args.file)))
    elif args.mesh:
        for lvl in args.levels:
            n = 2 ** lvl
            meshes.append((f"{args.mesh} level {lvl} (n={n})",
                           build_mesh(args.mesh, n)))
    else:
        raise WgStokesError("mesh-check needs --mesh or --file")
    bad = 0
    for name, mesh in meshes:
        rep = validate_mesh(mesh)
        status = "OK" if rep.ok else f"{len(rep.violations)} violation(s)"
        sys.stdout.write(f"{name}: {mesh.n_cells} cells, {mesh.n_edges} edges, "
                         f"h={mesh.h:.4g} ... {status}\n")
        for v in rep.violations:
            sys.stdout.write(f"  - {v}\n")
        bad += not rep.ok
    return 1 if bad else 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    np.random.seed(getattr(args, "seed", 0) or 0)  # belt and braces; probes seed locally
    handlers = {"solve": _cmd_solve, "probe": _cmd_probe, "mesh-check": _cmd_mesh_check}
    try:
        return handlers[args.command](args)
    except WgStokesError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
