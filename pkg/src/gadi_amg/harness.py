"""Sweeps, dataset generation, model training, and comparison reports.

The harness ties the solver and regression halves together: sweep a
parameter grid per mesh size, keep the best (fewest-cycle) record per n,
fit a GPR model to those optima, then solve with predicted parameters on
unseen mesh sizes. Reports are written as CSV with a mandatory header,
UTF-8 encoding, and LF line endings.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import gpr
from .amg import AmgHierarchy, CoarseningConfig, DivergenceError, setup, solve, with_smoother
from .problems import ProblemSpec, assemble, example_problem
from .smoothers import SmootherConfig, hss_optimal_alpha
from .sparse import SparseError, split_hs


class HarnessError(Exception):
    pass


class SweepFailure(HarnessError):
    """Every grid point failed to converge."""

    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


def frange(spec: str) -> tuple[float, float, float]:
    """Parse a "lo:hi:step" range specification."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise HarnessError(f"range {spec!r} is not of the form lo:hi:step")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0:
        raise HarnessError("range step must be positive")
    if hi < lo:
        raise HarnessError("range upper bound below lower bound")
    return lo, hi, step


def range_values(rng: tuple[float, float, float]) -> np.ndarray:
    """Grid points lo, lo+step, ..., up to hi inclusive (within rounding).

    Half-open paper intervals (0, hi] are expressed by passing lo = step.
    """
    lo, hi, step = rng
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    vals = lo + step * np.arange(count)
    # snap to the step's decimal grid to avoid 0.30000000000000004-style keys
    decimals = max(0, -int(np.floor(np.log10(step))) + 2)
    return np.round(vals, decimals)


@dataclass(frozen=True)
class SweepGrid:
    problem: ProblemSpec
    n: int
    alpha_range: tuple[float, float, float]
    omega_range: tuple[float, float, float] | None = None
    omega_fixed: float = 1.9
    theta: float = 0.025
    tol: float = 1e-8
    max_cycles: int = 500
    precond: str = "identity"

    def alphas(self) -> np.ndarray:
        return range_values(self.alpha_range)

    def omegas(self) -> np.ndarray:
        if self.omega_range is None:
            return np.array([self.omega_fixed])
        return range_values(self.omega_range)


@dataclass(frozen=True)
class SweepRecord:
    n: int
    alpha: float
    omega: float
    iterations: int
    converged: bool
    wall_time_ms: float


@dataclass
class Dataset:
    problem_kind: str
    phi: float
    schedule: dict
    grid: dict
    records: list[SweepRecord] = field(default_factory=list)

    def usable(self) -> list[SweepRecord]:
        return [r for r in self.records if r.converged]


def _solve_point(
    hierarchy: AmgHierarchy, b, alpha, omega, tol, max_cycles, precond="identity"
) -> SweepRecord:
    n = int(round(np.sqrt(hierarchy.finest.a.dim))) + 1
    cfg = SmootherConfig(kind="pgadi_hs", alpha=alpha, omega=omega, precond=precond)
    h = with_smoother(hierarchy, cfg)
    t0 = time.perf_counter()
    try:
        _, report = solve(h, b, tol=tol, max_cycles=max_cycles)
        iterations, converged = report.iterations, report.converged
    except (DivergenceError, SparseError):
        iterations, converged = max_cycles, False
    wall_ms = (time.perf_counter() - t0) * 1e3
    return SweepRecord(n, float(alpha), float(omega), iterations, converged, wall_ms)


def _better(a: SweepRecord, b: SweepRecord) -> bool:
    """True if a beats b: fewer iterations, then wall time, then alpha, omega."""
    if a.converged != b.converged:
        return a.converged
    ka = (a.iterations, a.wall_time_ms, a.alpha, a.omega)
    kb = (b.iterations, b.wall_time_ms, b.alpha, b.omega)
    return ka < kb


def sweep(grid: SweepGrid) -> tuple[SweepRecord, list[SweepRecord]]:
    """Evaluate every (alpha, omega) grid point on one assembled problem.

    Assembly and the AMG setup run once; only the smoothers are rebuilt
    per grid point.
    """
    system = assemble(grid.problem, grid.n)
    hierarchy = setup(
        system.matrix,
        CoarseningConfig(strength_theta=grid.theta),
        SmootherConfig(kind="pgadi_hs", alpha=1.0),
    )
    records: list[SweepRecord] = []
    best: SweepRecord | None = None
    for alpha in grid.alphas():
        for omega in grid.omegas():
            rec = _solve_point(
                hierarchy, system.rhs, alpha, omega, grid.tol, grid.max_cycles, grid.precond
            )
            records.append(rec)
            if best is None or _better(rec, best):
                best = rec
    if best is None or not best.converged:
        raise SweepFailure(f"no grid point converged at n = {grid.n}", records)
    return best, records


def gen_dataset(
    problem: ProblemSpec,
    train: tuple[float, float, float],
    grid_template: SweepGrid,
    train2: tuple[float, float, float] | None = None,
) -> Dataset:
    """Run a sweep at every training mesh size; keep the best record per n.

    Sweep failures leave a non-converged placeholder so gaps stay visible.
    """
    ns = [int(v) for v in range_values(train)]
    if train2 is not None:
        ns += [int(v) for v in range_values(train2)]
    ds = Dataset(
        problem_kind=problem.kind,
        phi=problem.phi,
        schedule={"train": list(train), "train2": None if train2 is None else list(train2)},
        grid={
            "alpha_range": list(grid_template.alpha_range),
            "omega_range": None
            if grid_template.omega_range is None
            else list(grid_template.omega_range),
            "omega_fixed": grid_template.omega_fixed,
        },
    )
    for n in ns:
        g = replace(grid_template, problem=problem, n=n)
        try:
            best, _ = sweep(g)
        except SweepFailure:
            best = SweepRecord(n, float("nan"), float("nan"), g.max_cycles, False, 0.0)
        ds.records.append(best)
    return ds


def dataset_to_dict(ds: Dataset) -> dict:
    return {
        "problem": ds.problem_kind,
        "phi": ds.phi,
        "schedule": ds.schedule,
        "grid": ds.grid,
        "records": [
            {
                "n": r.n,
                "alpha": r.alpha,
                "omega": r.omega,
                "iterations": r.iterations,
                "converged": r.converged,
                "wall_ms": r.wall_time_ms,
            }
            for r in ds.records
        ],
    }


def dataset_from_dict(doc: dict) -> Dataset:
    ds = Dataset(
        problem_kind=doc["problem"],
        phi=doc.get("phi", 0.0),
        schedule=doc.get("schedule", {}),
        grid=doc.get("grid", {}),
    )
    for r in doc["records"]:
        ds.records.append(
            SweepRecord(
                int(r["n"]), r["alpha"], r["omega"], int(r["iterations"]),
                bool(r["converged"]), r["wall_ms"],
            )
        )
    return ds


def save_dataset(path, ds: Dataset) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_dict(ds), fh, indent=2)


def load_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return dataset_from_dict(json.load(fh))


_KERNEL_FLAGS = {
    "gauss-unsquared": "gauss_unsquared",
    "se": "squared_exponential",
    "library": "library",
}


def train_model(
    ds: Dataset,
    tasks: tuple[str, ...] = ("alpha",),
    kernel: str = "gauss-unsquared",
    noise_sigma: float = gpr.DEFAULT_NOISE,
):
    """Fit a GPR model to the best-per-n records of a dataset.

    {alpha} gives a single-task model; {alpha, omega} a two-task model.
    """
    if tasks not in (("alpha",), ("alpha", "omega")):
        raise HarnessError(f"unsupported task set {tasks!r}")
    family = _KERNEL_FLAGS.get(kernel)
    if family is None:
        raise HarnessError(f"unknown kernel flag {kernel!r}")
    usable = ds.usable()
    if len(usable) < 3:
        raise HarnessError("dataset has fewer than 3 usable records")
    xs = np.array([r.n for r in usable], dtype=float)
    if tasks == ("alpha",):
        ys = np.array([r.alpha for r in usable])
        return gpr.fit(xs, ys, kernel_family=family, noise_sigma=noise_sigma)
    ys = np.vstack(
        [[r.alpha for r in usable], [r.omega for r in usable]]
    )
    return gpr.mt_fit(xs, ys, kernel_family=family, noise_init=noise_sigma)


@dataclass(frozen=True)
class PredictionRow:
    n: int
    alpha: float
    omega: float
    iterations: int
    converged: bool
    wall_time_ms: float
    sigma_alpha: float
    sigma_omega: float | None = None


def predict_params(model, n: int, omega_fixed: float = 1.9):
    """Predicted (alpha, omega, sigma_alpha, sigma_omega) for one mesh size."""
    if isinstance(model, gpr.MtGprModel):
        pa = gpr.mt_predict(model, n, 0)
        po = gpr.mt_predict(model, n, 1)
        return pa.mean, po.mean, np.sqrt(pa.variance), np.sqrt(po.variance)
    p = gpr.predict(model, n)
    return p.mean, omega_fixed, np.sqrt(p.variance), None


def predict_and_solve(
    model,
    problem: ProblemSpec,
    ns: list[int],
    theta: float = 0.025,
    tol: float = 1e-8,
    max_cycles: int = 500,
    omega_fixed: float = 1.9,
    do_solve: bool = True,
) -> list[PredictionRow]:
    rows = []
    for n in ns:
        alpha, omega, sa, so = predict_params(model, n, omega_fixed)
        if not do_solve:
            rows.append(PredictionRow(n, alpha, omega, 0, True, 0.0, sa, so))
            continue
        if alpha <= 0 or not (0.0 < omega < 2.0):
            rows.append(PredictionRow(n, alpha, omega, max_cycles, False, 0.0, sa, so))
            continue
        system = assemble(problem, n)
        hierarchy = setup(
            system.matrix,
            CoarseningConfig(strength_theta=theta),
            SmootherConfig(kind="pgadi_hs", alpha=alpha, omega=omega),
        )
        rec = _solve_point(hierarchy, system.rhs, alpha, omega, tol, max_cycles)
        rows.append(
            PredictionRow(n, alpha, omega, rec.iterations, rec.converged, rec.wall_time_ms, sa, so)
        )
    return rows


def compare_smoothers(
    problem: ProblemSpec,
    ns: list[int],
    alpha_range: tuple[float, float, float] = (0.01, 0.1, 0.01),
    omega_range: tuple[float, float, float] | None = None,
    omega_fixed: float = 1.9,
    theta: float = 0.025,
    tol: float = 1e-8,
    max_cycles: int = 500,
    precond: str = "identity",
) -> list[dict]:
    """Best swept PGADI-HS against HSS at its formula-optimal shift.

    Emits one dict per n with both iteration counts and wall times.
    """
    out = []
    for n in ns:
        grid = SweepGrid(
            problem=problem,
            n=n,
            alpha_range=alpha_range,
            omega_range=omega_range,
            omega_fixed=omega_fixed,
            theta=theta,
            tol=tol,
            max_cycles=max_cycles,
            precond=precond,
        )
        try:
            best, _ = sweep(grid)
        except SweepFailure:
            best = SweepRecord(n, float("nan"), float("nan"), max_cycles, False, 0.0)

        system = assemble(problem, n)
        alpha_star = hss_optimal_alpha(split_hs(system.matrix).h)
        hierarchy = setup(
            system.matrix,
            CoarseningConfig(strength_theta=theta),
            SmootherConfig(kind="hss", alpha=alpha_star, precond=precond),
        )
        t0 = time.perf_counter()
        try:
            _, report = solve(hierarchy, system.rhs, tol=tol, max_cycles=max_cycles)
            hss_iters, hss_conv = report.iterations, report.converged
        except (DivergenceError, SparseError):
            hss_iters, hss_conv = max_cycles, False
        hss_ms = (time.perf_counter() - t0) * 1e3
        out.append(
            {
                "n": n,
                "pgadi": best,
                "hss": SweepRecord(n, alpha_star, float("nan"), hss_iters, hss_conv, hss_ms),
            }
        )
    return out


# -- CSV writers ---------------------------------------------------------


def _open_csv(path):
    return open(path, "w", encoding="utf-8", newline="")


def write_sweep_csv(path, records: list[SweepRecord]) -> None:
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "alpha", "omega", "iterations", "converged", "wall_ms"])
        for r in records:
            w.writerow([r.n, r.alpha, r.omega, r.iterations, r.converged, f"{r.wall_time_ms:.3f}"])


def write_prediction_csv(path, rows: list[PredictionRow]) -> None:
    two_task = any(r.sigma_omega is not None for r in rows)
    header = ["n", "alpha", "omega", "iterations", "converged", "wall_ms", "pred_sigma_alpha"]
    if two_task:
        header.append("pred_sigma_omega")
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            row = [r.n, r.alpha, r.omega, r.iterations, r.converged,
                   f"{r.wall_time_ms:.3f}", r.sigma_alpha]
            if two_task:
                row.append("" if r.sigma_omega is None else r.sigma_omega)
            w.writerow(row)


def write_compare_csv(path, report: list[dict]) -> None:
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "smoother", "alpha", "omega", "iterations", "converged", "wall_ms"])
        for row in report:
            for tag in ("pgadi", "hss"):
                r = row[tag]
                w.writerow(
                    [row["n"], tag, r.alpha, r.omega, r.iterations, r.converged,
                     f"{r.wall_time_ms:.3f}"]
                )
