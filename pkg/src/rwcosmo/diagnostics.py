"""Trajectory verification: bounds, quadrature oracles, decay rates, limits.

Every check is a pure function of the trajectory; margins follow one
convention throughout: margin <= 0 means the check passes, and a positive
margin measures the worst violation.

Two numerical floors appear below.  The constraint residual never vanishes
exactly in floating point, so the monitor Q = 24*pi*rho + 3*constraint
bottoms out at a noise level; the Q >= 0 and envelope checks allow an
explicit budget-derived floor for it, and decay-rate fits are windowed to
the part of each series that sits at least two orders of magnitude above the
measured constraint drift.  Inside those windows everything is tested at
full stated tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .initial import validate_theorem1
from .integrator import GUARD_TRIPPED, Trajectory
from .model import EIGHT_PI, FOUR_PI, TWENTY_FOUR_PI

STATUS_PASSED = "passed"
STATUS_FAILED = "failed"
STATUS_INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Tolerances:
    """Verification tolerances; stated in every report header.

    ``monotone_eps_factor`` scales rel_tol*u0 into the slack allowed on
    monotonicity comparisons.  ``envelope_slack`` pads the proven pointwise
    envelope Q0*exp(-3 nu t); ``rate_slack`` relaxes the fitted-rate lower
    bound 3*nu; ``h_inf_rel`` is the relative tolerance on the late-time
    expansion rate; ``constraint_budget`` is the acceptable constraint drift
    for a reference-accuracy run and feeds the Q noise floor.
    """

    envelope_slack: float = 1e-2
    rate_slack: float = 0.05
    h_inf_rel: float = 1e-3
    t00_limit_abs: float = 1e-6
    a_growth_slack: float = 1e-3
    rho_oracle_rel: float = 1e-6
    v_oracle_rel: float = 1e-6
    constraint_budget: float = 1e-7
    q_identity_tol: float = 1e-13
    q_ratio_gate: float = 1e-3
    monotone_eps_factor: float = 10.0

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    margin: float
    detail: str = ""


class DecayFit(NamedTuple):
    rate: float
    intercept: float
    residual: float


@dataclass(frozen=True)
class FitWindow:
    t_lo: float
    t_hi: float
    n_points: int


@dataclass(frozen=True)
class VerificationReport:
    nu: Optional[float]
    tolerances: Tolerances
    checks: tuple[Check, ...]
    fitted_rates: dict[str, Optional[DecayFit]]
    fit_windows: dict[str, Optional[FitWindow]]
    L_hat: float
    H_inf_hat: float
    C0_hat: float
    a_growth_ok: bool
    status: str
    notes: tuple[str, ...] = ()

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def fit_decay_rate(series: Sequence[tuple[float, float]],
                   window: tuple[float, float]) -> DecayFit:
    """Least-squares line through (t, ln y) inside [t_lo, t_hi].

    Returns (rate, intercept, residual) with rate = -slope and residual the
    RMS of the fit.  Requires y > 0 and at least 8 points inside the window.
    Affine-equivariant: scaling y by c > 0 shifts the intercept only.
    """
    t_lo, t_hi = window
    pts = np.asarray(list(series), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("series must be a sequence of (t, y) pairs")
    mask = (pts[:, 0] >= t_lo) & (pts[:, 0] <= t_hi)
    t = pts[mask, 0]
    y = pts[mask, 1]
    if t.size < 8:
        raise ValueError(f"need >= 8 points in window, got {t.size}")
    if np.any(y <= 0.0):
        raise ValueError("series must be strictly positive inside the window; "
                         "shrink the window before the data hit numerical zero")
    z = np.log(y)
    slope, intercept = np.polyfit(t, z, 1)
    resid = float(np.sqrt(np.mean((z - (slope * t + intercept)) ** 2)))
    return DecayFit(rate=float(-slope), intercept=float(intercept), residual=resid)


def cumulative_simpson(y: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative integral of uniformly sampled y, composite-Simpson order.

    Odd endpoints use the quadratic through the three nearest samples, so
    every prefix integral is fourth-order accurate.
    """
    n = y.size
    out = np.zeros(n)
    if n < 2:
        return out
    if n == 2:
        out[1] = 0.5 * dt * (y[0] + y[1])
        return out
    out[1] = dt / 12.0 * (5.0 * y[0] + 8.0 * y[1] - y[2])
    for i in range(2, n):
        if i % 2 == 0:
            out[i] = out[i - 2] + dt / 3.0 * (y[i - 2] + 4.0 * y[i - 1] + y[i])
        else:
            out[i] = out[i - 1] + dt / 12.0 * (-y[i - 2] + 8.0 * y[i - 1] + 5.0 * y[i])
    return out


def _monotone_eps(traj: Trajectory, tol: Tolerances) -> float:
    return tol.monotone_eps_factor * traj.config.rel_tol * abs(traj.initial.u0)


def _require_samples(traj: Trajectory) -> dict[str, np.ndarray]:
    if not traj.samples:
        raise ValueError("trajectory has no samples")
    return traj.as_arrays()


def _worst_increase(series: np.ndarray) -> float:
    """Largest sample-to-sample increase; 0 for fewer than two samples."""
    diffs = np.diff(series)
    return float(np.max(diffs)) if diffs.size else 0.0


def verify_bounds(traj: Trajectory, tol: Tolerances = Tolerances()) -> list[Check]:
    """Pointwise bounds and monotonicity along the trajectory.

    Monotonicity checks on a single-sample trajectory pass vacuously; the
    bound checks are still evaluated at the point.
    """
    cols = _require_samples(traj)
    eps = _monotone_eps(traj, tol)
    u = cols["u"]
    v = cols["v"]
    phi = cols["phi"]
    chi = cols["chi"]
    u0 = traj.initial.u0
    v0 = float(v[0])
    nu = validate_theorem1(traj.params, traj.initial).nu

    worst_du = _worst_increase(u)
    checks = [
        Check("u_nonincreasing",
              passed=worst_du <= eps,
              margin=worst_du - eps,
              detail=f"eps = {eps:.3g}"),
        Check("u_upper_bound",
              passed=bool(np.max(u) <= u0 + eps),
              margin=float(np.max(u) - (u0 + eps))),
        Check("v_positive",
              passed=bool(np.min(v) > 0.0),
              margin=float(-np.min(v))),
        Check("v_upper_bound",
              passed=bool(np.max(v) <= v0),
              margin=float(np.max(v) - v0)),
    ]
    if nu is not None:
        checks.insert(1, Check("u_lower_bound",
                               passed=bool(np.min(u) >= nu),
                               margin=float(nu - np.min(u))))

    worst_dt00 = _worst_increase(cols["T00"])
    checks.append(Check("t00_nonincreasing",
                        passed=worst_dt00 <= eps,
                        margin=worst_dt00 - eps,
                        detail=f"eps = {eps:.3g}"))

    q_floor = _q_noise_floor(traj, tol)
    min_q = float(np.min(cols["Q"]))
    checks.append(Check("q_nonnegative",
                        passed=min_q >= -q_floor,
                        margin=-q_floor - min_q,
                        detail=f"noise floor = {q_floor:.3g}"))

    # phi may not decrease while the field velocity is nonnegative.
    if phi.size >= 2:
        both_nonneg = (chi[:-1] >= 0.0) & (chi[1:] >= 0.0)
        drops = (phi[:-1] - phi[1:])[both_nonneg]
        worst_drop = float(np.max(drops)) if drops.size else 0.0
    else:
        worst_drop = 0.0
    checks.append(Check("phi_nondecreasing_while_chi_nonneg",
                        passed=worst_drop <= eps,
                        margin=worst_drop - eps,
                        detail=f"eps = {eps:.3g}"))
    return checks


def verify_quadrature(traj: Trajectory, tol: Tolerances = Tolerances()) -> list[Check]:
    """Independent quadrature oracles for the v and rho components.

    rho(t) must match rho0*exp(-4 int u) and v(t)*exp(2 int u) must return
    v0, with the integral taken by composite Simpson on the samples.
    Deviations are measured relative to rho0 and v0.
    """
    cols = _require_samples(traj)
    t = cols["t"]
    if t.size < 3:
        detail = "too few samples for quadrature"
        return [Check("rho_quadrature_oracle", True, -tol.rho_oracle_rel, detail),
                Check("v_quadrature_identity", True, -tol.v_oracle_rel, detail)]
    dt = float(t[1] - t[0])
    if not np.allclose(np.diff(t), dt, rtol=1e-6, atol=1e-12):
        detail = "non-uniform sample grid"
        return [Check("rho_quadrature_oracle", True, -tol.rho_oracle_rel, detail),
                Check("v_quadrature_identity", True, -tol.v_oracle_rel, detail)]
    integral_u = cumulative_simpson(cols["u"], dt)
    rho0 = float(cols["rho"][0])
    if rho0 > 0.0:
        oracle = rho0 * np.exp(-4.0 * integral_u)
        dev = float(np.max(np.abs(cols["rho"] - oracle))) / rho0
    else:
        dev = float(np.max(np.abs(cols["rho"])))  # rho must stay identically 0
    checks = [Check("rho_quadrature_oracle",
                    passed=dev <= tol.rho_oracle_rel,
                    margin=dev - tol.rho_oracle_rel,
                    detail=f"max relative deviation {dev:.3g}")]
    v0 = float(cols["v"][0])
    vdev = float(np.max(np.abs(cols["v"] * np.exp(2.0 * integral_u) - v0))) / v0
    checks.append(Check("v_quadrature_identity",
                        passed=vdev <= tol.v_oracle_rel,
                        margin=vdev - tol.v_oracle_rel,
                        detail=f"max relative deviation {vdev:.3g}"))
    return checks


def q_identity_check(traj: Trajectory) -> float:
    """Worst normalized deviation of Q - 24*pi*rho - 3*constraint.

    Pure algebra, independent of integration error; must sit at roundoff
    (<= 1e-13) for any trajectory, including inadmissible ones.
    """
    cols = _require_samples(traj)
    dev = np.abs(cols["Q"] - TWENTY_FOUR_PI * cols["rho"] - 3.0 * cols["constraint"])
    return float(np.max(dev / (1.0 + np.abs(cols["Q"]))))


def _q_noise_floor(traj: Trajectory, tol: Tolerances) -> float:
    # On-shell Q = 24*pi*rho; its numerical floor combines the density oracle
    # budget with three times the constraint budget (Q = 24*pi*rho + 3*C).
    return (TWENTY_FOUR_PI * tol.rho_oracle_rel * traj.initial.rho0
            + 3.0 * tol.constraint_budget)


def _decay_window(t: np.ndarray, y: np.ndarray, floor: float) -> Optional[tuple[float, float]]:
    """Window for a log-linear fit on a decaying series.

    Uses the contiguous prefix where the series stays above 100x its
    numerical floor; fits the last half of that prefix when it still holds 8
    points, otherwise the whole prefix.  Returns None when fewer than 8
    usable points exist.
    """
    cutoff = 100.0 * floor
    bad = np.flatnonzero(~(y > cutoff))
    end = int(bad[0]) if bad.size else y.size
    if end < 8:
        return None
    start = end // 2
    if end - start < 8:
        start = 0
    return float(t[start]), float(t[end - 1])


def verify_asymptotics(traj: Trajectory, nu: Optional[float],
                       tol: Tolerances = Tolerances(),
                       ) -> tuple[list[Check], dict, dict, dict, list[str], bool]:
    """Late-time checks: decay envelope, fitted rates, limits, growth.

    Returns (checks, estimates, fits, windows, notes, inconclusive).  The
    decay-based checks need enough dynamic range: when Q has not decayed
    past the gate factor the result is inconclusive, not a failure.
    """
    cols = _require_samples(traj)
    t = cols["t"]
    q = cols["Q"]
    phi = cols["phi"]
    eps = _monotone_eps(traj, tol)
    notes: list[str] = []
    fits: dict[str, Optional[DecayFit]] = {}
    windows: dict[str, Optional[FitWindow]] = {}

    l_hat = float(phi[-1] * phi[-1])
    h_end = float(cols["H"][-1])
    c0_hat = traj.params.lam + FOUR_PI * traj.params.mass_sq * l_hat
    estimates = {"L_hat": l_hat, "H_inf_hat": h_end, "C0_hat": c0_hat}

    if np.any(cols["chi"] < 0.0):
        notes.append("non-decreasing-field hypothesis violated (chi < 0 encountered); "
                     "failures below indicate the hypothesis matters, not a defect "
                     "of the verified statements")

    q_floor = _q_noise_floor(traj, tol)
    q0 = float(q[0])
    inconclusive = False
    if nu is None:
        notes.append("decay rate nu undefined for these data; asymptotic checks skipped")
        inconclusive = True
    elif q0 <= q_floor:
        notes.append("initial Q sits at the numerical floor; decay unobservable")
        inconclusive = True
    elif abs(float(q[-1])) >= tol.q_ratio_gate * q0:
        notes.append(f"Q(t_end)/Q(0) = {float(q[-1]) / q0:.3g} has not passed the "
                     f"{tol.q_ratio_gate:g} gate; integrate further for conclusive asymptotics")
        inconclusive = True
    if inconclusive:
        return [], estimates, fits, windows, notes, True

    checks: list[Check] = []

    envelope = q0 * np.exp(-3.0 * nu * t) * (1.0 + tol.envelope_slack) + q_floor
    worst_env = float(np.max(q - envelope))
    checks.append(Check("q_envelope",
                        passed=worst_env <= 0.0,
                        margin=worst_env,
                        detail=f"Q <= Q0*exp(-3 nu t)*(1+{tol.envelope_slack:g}) "
                               f"+ floor {q_floor:.3g}"))

    # Fit windows clip at 100x the measured constraint drift, mapped into
    # each series through its constraint coefficient.
    drift = max(float(np.max(np.abs(cols["constraint"]))), 1e-15)
    rate_floor = 3.0 * nu * (1.0 - tol.rate_slack)
    for name, series, series_floor in (
        ("Q", q, 3.0 * drift),
        ("rho", cols["rho"], drift / EIGHT_PI),
        ("chi2", cols["chi"] ** 2, drift / FOUR_PI),
    ):
        window = _decay_window(t, series, series_floor)
        if window is None:
            fits[name] = None
            windows[name] = None
            notes.append(f"{name}: insufficient data above the noise floor for a rate fit")
            continue
        fit = fit_decay_rate(np.column_stack([t, series]), window)
        fits[name] = fit
        windows[name] = FitWindow(t_lo=window[0], t_hi=window[1],
                                  n_points=int(np.sum((t >= window[0]) & (t <= window[1]))))
        checks.append(Check(f"{name}_decay_rate",
                            passed=fit.rate >= rate_floor,
                            margin=rate_floor - fit.rate,
                            detail=f"fitted {fit.rate:.6g} vs required {rate_floor:.6g}"))

    worst_drop = _worst_increase(-(phi * phi))
    checks.append(Check("phi_squared_monotone",
                        passed=worst_drop <= eps,
                        margin=worst_drop - eps,
                        detail=f"eps = {eps:.3g}"))

    phi0_sq = traj.initial.phi0 * traj.initial.phi0
    checks.append(Check("L_at_least_initial",
                        passed=l_hat >= phi0_sq - eps,
                        margin=phi0_sq - eps - l_hat))

    t00_target = 0.5 * traj.params.mass_sq * l_hat
    t00_dev = abs(float(cols["T00"][-1]) - t00_target)
    checks.append(Check("t00_limit",
                        passed=t00_dev <= tol.t00_limit_abs,
                        margin=t00_dev - tol.t00_limit_abs,
                        detail=f"|T00(t_end) - m^2 L/2| = {t00_dev:.3g}"))

    if c0_hat > 0.0:
        h_target = math.sqrt(3.0 * c0_hat)
        h_dev = abs(h_end - h_target)
        checks.append(Check("h_inf_limit",
                            passed=h_dev <= tol.h_inf_rel * h_target,
                            margin=h_dev - tol.h_inf_rel * h_target,
                            detail=f"H(t_end) = {h_end:.9g}, sqrt(3 C0) = {h_target:.9g}"))
    else:
        checks.append(Check("h_inf_limit", passed=False, margin=float(-c0_hat),
                            detail="C0 estimate not positive"))

    a0 = traj.initial.a0
    bound = a0 * np.exp(nu * t) * (1.0 - tol.a_growth_slack)
    worst_a = float(np.max(bound - cols["a"]))
    checks.append(Check("a_exponential_lower_bound",
                        passed=worst_a <= 0.0,
                        margin=worst_a,
                        detail=f"a >= a0*exp(nu t)*(1-{tol.a_growth_slack:g})"))
    ratio = float(cols["a"][-1]) / a0
    target = math.exp(nu * float(t[-1]))
    checks.append(Check("a_growth_ratio",
                        passed=ratio >= target,
                        margin=target - ratio,
                        detail=f"a(t_end)/a0 = {ratio:.6g} vs exp(nu t_end) = {target:.6g}"))

    return checks, estimates, fits, windows, notes, False


def verify(traj: Trajectory, tol: Tolerances = Tolerances()) -> VerificationReport:
    """Full verification of one trajectory.

    Idempotent and side-effect free; running it twice on the same trajectory
    produces identical reports.
    """
    nu = validate_theorem1(traj.params, traj.initial).nu
    checks = verify_bounds(traj, tol)
    checks += verify_quadrature(traj, tol)

    identity_dev = q_identity_check(traj)
    checks.append(Check("q_identity",
                        passed=identity_dev <= tol.q_identity_tol,
                        margin=identity_dev - tol.q_identity_tol,
                        detail=f"max |Q - 24 pi rho - 3 C|/(1+|Q|) = {identity_dev:.3g}"))

    asym_checks, estimates, fits, windows, notes, inconclusive = \
        verify_asymptotics(traj, nu, tol)
    checks += asym_checks

    if traj.guard_tripped:
        trips = [e for e in traj.events if e.kind == GUARD_TRIPPED]
        notes.append("integration aborted by guard: " +
                     "; ".join(f"t = {e.t:.6g}: {e.detail}" for e in trips))

    growth_names = ("a_exponential_lower_bound", "a_growth_ratio")
    growth = [c for c in checks if c.name in growth_names]
    a_growth_ok = bool(growth) and all(c.passed for c in growth)

    if any(not c.passed for c in checks):
        status = STATUS_FAILED
    elif inconclusive:
        status = STATUS_INCONCLUSIVE
    else:
        status = STATUS_PASSED

    return VerificationReport(
        nu=nu,
        tolerances=tol,
        checks=tuple(checks),
        fitted_rates={k: fits.get(k) for k in ("Q", "rho", "chi2")},
        fit_windows={k: windows.get(k) for k in ("Q", "rho", "chi2")},
        L_hat=estimates["L_hat"],
        H_inf_hat=estimates["H_inf_hat"],
        C0_hat=estimates["C0_hat"],
        a_growth_ok=a_growth_ok,
        status=status,
        notes=tuple(notes),
    )
