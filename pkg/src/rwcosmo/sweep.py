"""Parameter-grid runner: integrate + verify over a cartesian product.

Rows are independent and may be evaluated by a process pool; results are
always emitted in row-major order over the declared axes, so the output table
is deterministic regardless of execution parallelism.  Wall-clock timings are
kept on the in-memory rows but never serialized into the table (they would
break byte-level determinism); the CLI writes them to a sidecar file.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

from .diagnostics import Tolerances, verify
from .initial import NoRealBranch, make_initial_data, validate_theorem1
from .integrator import (IntegratorConfig, InadmissibleInitialData,
                         StepSizeUnderflow, integrate)
from .model import ModelParams

SWEEP_PARAMS = ("lambda", "mass", "phi0", "chi0", "rho0")

STATUS_OK = "ok"
STATUS_SKIPPED = "skipped"
STATUS_NO_REAL_BRANCH = "no-real-branch"
STATUS_GUARD_TRIPPED = "guard-tripped"
STATUS_STEP_UNDERFLOW = "step-underflow"

#: Column order of the sweep table (timings intentionally excluded).
SWEEP_COLUMNS = ("lambda", "mass", "phi0", "chi0", "rho0", "admissible",
                 "status", "nu", "rate_Q", "rate_rho", "rate_chi2", "L_hat",
                 "H_inf_hat", "C0_hat", "max_constraint", "checks_passed",
                 "events")


@dataclass(frozen=True)
class SweepPlan:
    """Cartesian grid over a subset of (lambda, mass, phi0, chi0, rho0).

    ``axes`` is an ordered tuple of (name, values); every parameter not on an
    axis must appear in ``fixed``.  Row order is row-major over the declared
    axis order.
    """

    axes: tuple[tuple[str, tuple[float, ...]], ...]
    fixed: tuple[tuple[str, float], ...] = ()
    a0: float = 1.0
    branch: str = "expanding"
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    cap: int = 100_000
    workers: Optional[int] = None

    def __post_init__(self) -> None:
        axis_names = [name for name, _ in self.axes]
        fixed_names = [name for name, _ in self.fixed]
        if not self.axes:
            raise ValueError("plan needs at least one axis")
        for name, values in self.axes:
            if not values:
                raise ValueError(f"axis {name!r} is empty")
        unknown = [n for n in axis_names + fixed_names if n not in SWEEP_PARAMS]
        if unknown:
            raise ValueError(f"unknown sweep parameter(s): {', '.join(unknown)}")
        dupes = set(axis_names) & set(fixed_names)
        if dupes:
            raise ValueError(f"parameter(s) both swept and fixed: {', '.join(sorted(dupes))}")
        missing = [n for n in SWEEP_PARAMS if n not in axis_names + fixed_names]
        if missing:
            raise ValueError(f"unassigned sweep parameter(s): {', '.join(missing)}")
        if self.size > self.cap:
            raise ValueError(f"grid size {self.size} exceeds cap {self.cap}")
        if self.branch not in ("expanding", "contracting"):
            raise ValueError(f"branch must be 'expanding' or 'contracting', got {self.branch!r}")

    @property
    def size(self) -> int:
        n = 1
        for _, values in self.axes:
            n *= len(values)
        return n

    def points(self) -> list[dict[str, float]]:
        """Grid points in row-major order over the declared axes."""
        base = dict(self.fixed)
        out = []
        names = [name for name, _ in self.axes]
        for combo in product(*(values for _, values in self.axes)):
            point = dict(base)
            point.update(zip(names, combo))
            out.append(point)
        return out


@dataclass(frozen=True)
class SweepRow:
    lam: float
    mass: float
    phi0: float
    chi0: float
    rho0: float
    admissible: bool
    status: str
    nu: float
    rate_Q: float
    rate_rho: float
    rate_chi2: float
    L_hat: float
    H_inf_hat: float
    C0_hat: float
    max_constraint: float
    checks_passed: bool
    events: str
    wall_time: float


def _evaluate_point(args: tuple) -> SweepRow:
    point, a0, branch, config, tol = args
    start = time.perf_counter()
    lam, mass = point["lambda"], point["mass"]
    phi0, chi0, rho0 = point["phi0"], point["chi0"], point["rho0"]
    nan = math.nan

    def row(admissible: bool, status: str, nu: float = math.nan, **kw) -> SweepRow:
        values = dict(nu=nu, rate_Q=nan, rate_rho=nan, rate_chi2=nan, L_hat=nan,
                      H_inf_hat=nan, C0_hat=nan, max_constraint=nan,
                      checks_passed=False, events="")
        values.update(kw)
        return SweepRow(lam=lam, mass=mass, phi0=phi0, chi0=chi0, rho0=rho0,
                        admissible=admissible, status=status,
                        wall_time=time.perf_counter() - start, **values)

    params = ModelParams(lam=lam, mass=mass)
    try:
        data = make_initial_data(params, a0=a0, phi0=phi0, chi0=chi0,
                                 rho0=rho0, branch=branch)
    except NoRealBranch:
        return row(False, STATUS_NO_REAL_BRANCH)
    adm = validate_theorem1(params, data)
    nu = adm.nu if adm.nu is not None else math.nan
    if not adm.theorem1_applicable and not config.override_admissibility:
        return row(False, STATUS_SKIPPED, nu=nu)
    try:
        traj = integrate(data, params, config)
    except (StepSizeUnderflow, InadmissibleInitialData):
        return row(adm.theorem1_applicable, STATUS_STEP_UNDERFLOW, nu=nu)
    events = ";".join(f"{e.kind}@{e.t:.9g}" for e in traj.events)
    if traj.guard_tripped:
        return row(adm.theorem1_applicable, STATUS_GUARD_TRIPPED, nu=nu, events=events)
    report = verify(traj, tol)
    cols = traj.as_arrays()

    def rate(name: str) -> float:
        fit = report.fitted_rates.get(name)
        return fit.rate if fit is not None else nan

    return row(adm.theorem1_applicable, STATUS_OK, nu=nu,
               rate_Q=rate("Q"), rate_rho=rate("rho"), rate_chi2=rate("chi2"),
               L_hat=report.L_hat, H_inf_hat=report.H_inf_hat,
               C0_hat=report.C0_hat,
               max_constraint=float(abs(cols["constraint"]).max()),
               checks_passed=report.all_passed, events=events)


def run_sweep(plan: SweepPlan) -> list[SweepRow]:
    """Evaluate every grid point; never aborts on per-point failures.

    Inadmissible points come back flagged (skipped / no-real-branch /
    guard-tripped) rather than raising.  The returned list is in plan order
    whether or not a worker pool was used.
    """
    points = plan.points()
    args = [(p, plan.a0, plan.branch, plan.integrator, plan.tolerances)
            for p in points]
    workers = plan.workers if plan.workers is not None else (os.cpu_count() or 1)
    workers = max(1, min(workers, len(args)))
    if workers == 1:
        return [_evaluate_point(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evaluate_point, args, chunksize=max(1, len(args) // (4 * workers))))


def _fmt_value(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "nan" if math.isnan(x) else format(x, ".17g")
    return str(x)


def sweep_table_csv(rows: list[SweepRow]) -> str:
    """Deterministic CSV of the sweep table (wall times excluded)."""
    lines = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        record = {
            "lambda": r.lam, "mass": r.mass, "phi0": r.phi0, "chi0": r.chi0,
            "rho0": r.rho0, "admissible": r.admissible, "status": r.status,
            "nu": r.nu, "rate_Q": r.rate_Q, "rate_rho": r.rate_rho,
            "rate_chi2": r.rate_chi2, "L_hat": r.L_hat,
            "H_inf_hat": r.H_inf_hat, "C0_hat": r.C0_hat,
            "max_constraint": r.max_constraint,
            "checks_passed": r.checks_passed, "events": r.events,
        }
        lines.append(",".join(_fmt_value(record[c]) for c in SWEEP_COLUMNS))
    return "\n".join(lines) + "\n"
