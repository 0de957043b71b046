"""Command-line front end for solving, sweeping, and regression workflows."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import gpr
from .amg import CoarseningConfig, DivergenceError, setup, solve
from .harness import (
    SweepGrid,
    compare_smoothers,
    frange,
    gen_dataset,
    load_dataset,
    predict_and_solve,
    save_dataset,
    sweep,
    train_model,
    write_compare_csv,
    write_prediction_csv,
    write_sweep_csv,
)
from .problems import discretization_error, example_problem
from .smoothers import SmootherConfig
from .sparse import SparseError

_SMOOTHER_FLAGS = {"pgadi-hs": "pgadi_hs", "hss": "hss", "spd-gadi": "spd_gadi"}


def _add_problem_flags(p, with_n=True):
    p.add_argument("--problem", required=True, choices=("poisson", "reaction", "convdiff"))
    if with_n:
        p.add_argument("--n", type=int, required=True)
    p.add_argument("--phi", type=float, default=0.0,
                   help="convection angle in radians (convdiff only)")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gadi-amg",
        description="Algebraic multigrid with alternating-splitting smoothers "
                    "and GPR-based parameter prediction.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="assemble one problem and run the multilevel solver")
    _add_problem_flags(p)
    p.add_argument("--smoother", default="pgadi-hs", choices=sorted(_SMOOTHER_FLAGS))
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=0.025)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-cycles", type=int, default=500)
    p.add_argument("--precond", default="identity", choices=("identity", "ilu0"))
    p.add_argument("--out", default=None, help="write a JSON report here")

    p = sub.add_parser("sweep", help="grid-search (alpha, omega) on one mesh size")
    _add_problem_flags(p)
    p.add_argument("--alpha-range", required=True, metavar="lo:hi:step")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--omega-range", metavar="lo:hi:step")
    g.add_argument("--omega", type=float)
    p.add_argument("--theta", type=float, default=0.025)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-cycles", type=int, default=500)
    p.add_argument("--out", required=True, help="CSV of every grid point")

    p = sub.add_parser("dataset", help="sweep a training schedule; save best-per-n records")
    _add_problem_flags(p, with_n=False)
    p.add_argument("--train", required=True, metavar="lo:hi:step")
    p.add_argument("--train2", default=None, metavar="lo:hi:step")
    p.add_argument("--alpha-range", default="0.001:0.1:0.001", metavar="lo:hi:step")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--omega-range", metavar="lo:hi:step")
    g.add_argument("--omega", type=float, default=None)
    p.add_argument("--out", required=True, help="dataset JSON path")

    p = sub.add_parser("gpr-train", help="fit a GPR model to a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--tasks", default="alpha", help="alpha or alpha,omega")
    p.add_argument("--kernel", default="gauss-unsquared",
                   choices=("gauss-unsquared", "se", "library"))
    p.add_argument("--noise", type=float, default=1e-4)
    p.add_argument("--out", required=True, help="model JSON path")

    p = sub.add_parser("gpr-predict", help="predict parameters (and optionally solve)")
    p.add_argument("--model", required=True)
    p.add_argument("--n", required=True, help="comma-separated mesh sizes")
    p.add_argument("--solve", action="store_true")
    p.add_argument("--problem", default="poisson",
                   choices=("poisson", "reaction", "convdiff"))
    p.add_argument("--phi", type=float, default=0.0)
    p.add_argument("--out", required=True, help="CSV of prediction rows")

    p = sub.add_parser("compare", help="best swept PGADI-HS vs formula-shift HSS")
    p.add_argument("--problem", required=True, choices=("poisson", "reaction", "convdiff"))
    p.add_argument("--n", required=True, help="comma-separated mesh sizes")
    p.add_argument("--phi", type=float, default=0.0)
    p.add_argument("--alpha-range", default="0.01:0.1:0.01", metavar="lo:hi:step")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--omega-range", metavar="lo:hi:step")
    g.add_argument("--omega", type=float, default=1.9)
    p.add_argument("--out", required=True, help="CSV, two rows per n")

    return ap


def _cmd_solve(args) -> int:
    from .problems import assemble

    spec = example_problem(args.problem, phi=args.phi)
    system = assemble(spec, args.n)
    cfg = SmootherConfig(
        kind=_SMOOTHER_FLAGS[args.smoother],
        alpha=args.alpha,
        omega=args.omega,
        precond=args.precond,
    )
    hierarchy = setup(system.matrix, CoarseningConfig(strength_theta=args.theta), cfg)
    try:
        u, report = solve(hierarchy, system.rhs, tol=args.tol, max_cycles=args.max_cycles)
    except (DivergenceError, SparseError) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return 1
    l2, linf = discretization_error(system, u)
    doc = {
        "problem": args.problem,
        "n": args.n,
        "smoother": args.smoother,
        "alpha": args.alpha,
        "omega": args.omega,
        "iterations": report.iterations,
        "converged": report.converged,
        "final_relative_residual": float(report.residual_history[-1]),
        "wall_s": report.wall_time,
        "l2_error": l2,
        "max_error": linf,
        "levels": hierarchy.summary(),
    }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
    status = "converged" if report.converged else "NOT converged"
    print(
        f"{args.problem} n={args.n} {args.smoother}: {status} in "
        f"{report.iterations} cycles, L2 error {l2:.3e}"
    )
    return 0 if report.converged else 1


def _grid_from_args(args, spec, n) -> SweepGrid:
    omega_range = frange(args.omega_range) if getattr(args, "omega_range", None) else None
    omega_fixed = args.omega if getattr(args, "omega", None) is not None else 1.9
    return SweepGrid(
        problem=spec,
        n=n,
        alpha_range=frange(args.alpha_range),
        omega_range=omega_range,
        omega_fixed=omega_fixed,
        theta=getattr(args, "theta", 0.025),
        tol=getattr(args, "tol", 1e-8),
        max_cycles=getattr(args, "max_cycles", 500),
    )


def _cmd_sweep(args) -> int:
    spec = example_problem(args.problem, phi=args.phi)
    grid = _grid_from_args(args, spec, args.n)
    best, records = sweep(grid)
    write_sweep_csv(args.out, records)
    print(
        f"best: alpha={best.alpha} omega={best.omega} "
        f"iterations={best.iterations} ({len(records)} grid points)"
    )
    return 0


def _cmd_dataset(args) -> int:
    spec = example_problem(args.problem, phi=args.phi)
    template = _grid_from_args(args, spec, 0)
    train = frange(args.train)
    train2 = frange(args.train2) if args.train2 else None
    ds = gen_dataset(spec, train, template, train2)
    save_dataset(args.out, ds)
    good = len(ds.usable())
    print(f"dataset: {len(ds.records)} mesh sizes, {good} converged; wrote {args.out}")
    return 0


def _cmd_gpr_train(args) -> int:
    ds = load_dataset(args.dataset)
    tasks = tuple(t.strip() for t in args.tasks.split(","))
    model = train_model(ds, tasks, kernel=args.kernel, noise_sigma=args.noise)
    gpr.save_model(args.out, model)
    kind = "multi-task" if isinstance(model, gpr.MtGprModel) else "single-task"
    print(f"trained {kind} model on {len(ds.usable())} points; wrote {args.out}")
    return 0


def _cmd_gpr_predict(args) -> int:
    model = gpr.load_model(args.model)
    ns = [int(v) for v in args.n.split(",")]
    spec = example_problem(args.problem, phi=args.phi)
    rows = predict_and_solve(model, spec, ns, do_solve=args.solve)
    write_prediction_csv(args.out, rows)
    for r in rows:
        tail = f" iterations={r.iterations}" if args.solve else ""
        print(f"n={r.n}: alpha={r.alpha:.4f} omega={r.omega:.4f}{tail}")
    return 0


def _cmd_compare(args) -> int:
    spec = example_problem(args.problem, phi=args.phi)
    ns = [int(v) for v in args.n.split(",")]
    omega_range = frange(args.omega_range) if args.omega_range else None
    report = compare_smoothers(
        spec,
        ns,
        alpha_range=frange(args.alpha_range),
        omega_range=omega_range,
        omega_fixed=args.omega if args.omega is not None else 1.9,
    )
    write_compare_csv(args.out, report)
    for row in report:
        p, h = row["pgadi"], row["hss"]
        print(f"n={row['n']}: pgadi-hs {p.iterations} vs hss {h.iterations}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "solve": _cmd_solve,
        "sweep": _cmd_sweep,
        "dataset": _cmd_dataset,
        "gpr-train": _cmd_gpr_train,
        "gpr-predict": _cmd_gpr_predict,
        "compare": _cmd_compare,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
