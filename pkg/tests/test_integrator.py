"""Adaptive stepper, events, guards, and solution-level oracles."""

import math
from dataclasses import replace

import numpy as np
import pytest

from rwcosmo import (CosmoState, InadmissibleInitialData, IntegratorConfig,
                     ModelParams, StepSizeUnderflow, integrate,
                     make_initial_data, step)
from rwcosmo.diagnostics import cumulative_simpson
from rwcosmo.integrator import FIELD_FROZEN, CHI_ZERO_CROSSING, GUARD_TRIPPED

from conftest import REF_CONFIG, REF_PARAMS, REF_NU, reference_initial

FOUR_PI = 4.0 * math.pi


class TestConfig:
    def test_defaults_valid(self):
        IntegratorConfig()

    @pytest.mark.parametrize("kwargs", [
        dict(rel_tol=0.0),
        dict(abs_tol=-1e-10),
        dict(h_min=0.0),
        dict(h_min=1e-2, h_init=1e-3),
        dict(h_init=1.0, h_max=0.5),
        dict(t_end=0.0),
        dict(t_end=-1.0),
        dict(sample_dt=0.0),
        dict(mode="euler"),
        dict(min_v=0.0),
    ])
    def test_invalid_configs_rejected(self, kwargs):
        with pytest.raises(ValueError):
            IntegratorConfig(**kwargs)


class TestStep:
    def test_fixed_point_is_exact(self):
        """Zero-dynamics state: any h returns the identical state with zero
        error estimate."""
        s = CosmoState(t=0.0, u=0.0, v=1.0, phi=0.0, chi=0.0, rho=0.0)
        for h in (1e-4, 1e-2, 0.25):
            s1, err, _ = step(s, ModelParams(lam=0.0, mass=1.0), h, IntegratorConfig())
            assert (s1.u, s1.v, s1.phi, s1.chi, s1.rho) == (0.0, 1.0, 0.0, 0.0, 0.0)
            assert err == 0.0

    def test_de_sitter_frozen_point_u_constant(self):
        """Paper mode with chi clamped at 0 and rho = 0: u stays put."""
        lam, m = 1.0, 1.0
        u = math.sqrt((lam + FOUR_PI * m * m) / 3.0)
        s = CosmoState(t=0.0, u=u, v=1.0, phi=1.0, chi=0.0, rho=0.0)
        s1, _, _ = step(s, ModelParams(lam=lam, mass=m), 0.01, IntegratorConfig())
        assert abs(s1.u - u) < 1e-13
        assert s1.chi == 0.0
        assert s1.phi == 1.0

    def test_kg_mode_field_moves_at_chi_zero(self):
        lam, m = 1.0, 1.0
        u = math.sqrt((lam + FOUR_PI) / 3.0)
        s = CosmoState(t=0.0, u=u, v=1.0, phi=1.0, chi=0.0, rho=0.0)
        cfg = IntegratorConfig(mode="kg")
        s1, _, _ = step(s, ModelParams(lam=lam, mass=m), 0.01, cfg)
        assert s1.chi < 0.0

    def test_richardson_halving_ratio(self):
        """Error estimate drops by ~2^5 when h is halved (5th-order pair)."""
        data = reference_initial()
        s = CosmoState(t=0.0, u=data.u0, v=1.0, phi=1.0, chi=0.1, rho=0.05)
        cfg = IntegratorConfig()
        _, e1, _ = step(s, REF_PARAMS, 0.02, cfg)
        _, e2, _ = step(s, REF_PARAMS, 0.01, cfg)
        assert 24.0 <= e1 / e2 <= 40.0

    def test_rejects_h_outside_bounds(self):
        s = CosmoState(t=0.0, u=0.0, v=1.0, phi=0.0, chi=0.0, rho=0.0)
        cfg = IntegratorConfig()
        with pytest.raises(ValueError):
            step(s, REF_PARAMS, cfg.h_max * 2.0, cfg)
        with pytest.raises(ValueError):
            step(s, REF_PARAMS, cfg.h_min / 2.0, cfg)

    def test_suggested_h_is_clamped_growth(self):
        """Suggestion never grows h by more than 5x."""
        s = CosmoState(t=0.0, u=0.1, v=1.0, phi=0.1, chi=0.01, rho=0.0)
        _, _, h_next = step(s, REF_PARAMS, 0.01, IntegratorConfig())
        assert h_next <= 0.05 + 1e-15


class TestIntegrateReference:
    def test_grid_and_first_sample(self, ref_trajectory, ref_initial):
        cols = ref_trajectory.as_arrays()
        t = cols["t"]
        assert t[0] == 0.0
        assert np.all(np.diff(t) > 0.0)
        assert len(ref_trajectory.samples) == 1001
        assert t[-1] == REF_CONFIG.t_end
        s0 = ref_trajectory.samples[0][0]
        assert (s0.u, s0.phi, s0.chi, s0.rho) == (
            ref_initial.u0, ref_initial.phi0, ref_initial.chi0, ref_initial.rho0)

    def test_constraint_drift_within_budget(self, ref_trajectory):
        cols = ref_trajectory.as_arrays()
        assert np.abs(cols["constraint"]).max() <= 1e-7

    def test_theorem1_bounds(self, ref_trajectory, ref_initial):
        cols = ref_trajectory.as_arrays()
        eps = 10.0 * REF_CONFIG.rel_tol * ref_initial.u0
        u = cols["u"]
        assert np.diff(u).max() <= eps
        assert u.min() >= REF_NU
        assert u.max() <= ref_initial.u0 + eps
        v = cols["v"]
        assert v.min() > 0.0
        assert v.max() <= v[0]

    def test_field_freezing_event(self, ref_trajectory):
        frozen = [e for e in ref_trajectory.events if e.kind == FIELD_FROZEN]
        assert len(frozen) == 1
        assert 0.05 < frozen[0].t < 0.1
        cols = ref_trajectory.as_arrays()
        after = cols["t"] > frozen[0].t
        assert np.all(cols["chi"][after] == 0.0)
        assert np.all(cols["phi"][after] == cols["phi"][after][0])

    def test_energy_monotone(self, ref_trajectory, ref_initial):
        cols = ref_trajectory.as_arrays()
        eps = 10.0 * REF_CONFIG.rel_tol * ref_initial.u0
        assert np.diff(cols["T00"]).max() <= eps

    def test_phi_nondecreasing(self, ref_trajectory):
        cols = ref_trajectory.as_arrays()
        assert np.diff(cols["phi"]).min() >= -1e-12

    def test_rho_quadrature_oracle(self, ref_trajectory, ref_initial):
        """rho(t) = rho0 * exp(-4 int u) with Simpson quadrature on samples."""
        cols = ref_trajectory.as_arrays()
        integral = cumulative_simpson(cols["u"], 0.01)
        oracle = ref_initial.rho0 * np.exp(-4.0 * integral)
        dev = np.abs(cols["rho"] - oracle).max() / ref_initial.rho0
        assert dev <= 1e-6

    def test_v_quadrature_identity(self, ref_trajectory):
        cols = ref_trajectory.as_arrays()
        integral = cumulative_simpson(cols["u"], 0.01)
        dev = np.abs(cols["v"] * np.exp(2.0 * integral) - cols["v"][0]).max() / cols["v"][0]
        assert dev <= 1e-6

    def test_determinism(self, ref_trajectory, ref_initial):
        again = integrate(ref_initial, REF_PARAMS, REF_CONFIG)
        assert again.samples == ref_trajectory.samples
        assert again.events == ref_trajectory.events

    def test_stats_populated(self, ref_trajectory):
        st = ref_trajectory.stats
        assert st.steps_accepted > 0
        assert st.rhs_evaluations == 7 * (st.steps_accepted + st.steps_rejected)


class TestInvariantSubspaces:
    def test_zero_rho_stays_exactly_zero(self):
        params = ModelParams(lam=1.0, mass=1.0)
        data = make_initial_data(params, 1.0, 1.0, 0.1, 0.0, "expanding")
        traj = integrate(data, params, replace(REF_CONFIG, t_end=2.0))
        cols = traj.as_arrays()
        assert np.all(cols["rho"] == 0.0)

    def test_radiation_scaling(self, radiation_trajectory):
        """Pure fluid: rho * a^4 = rho / v^2 is conserved to 1e-8 relative."""
        cols = radiation_trajectory.as_arrays()
        inv = cols["rho"] / cols["v"] ** 2
        assert np.abs(inv / inv[0] - 1.0).max() <= 1e-8

    def test_radiation_needs_override(self):
        """m = phi0 = 0 fails the lambda bound (0 > 0 is false)."""
        params = ModelParams(lam=0.0, mass=0.0)
        data = make_initial_data(params, 1.0, 0.0, 0.0, 1.0, "expanding")
        with pytest.raises(InadmissibleInitialData):
            integrate(data, params, replace(REF_CONFIG, t_end=5.0))


class TestModesAndGuards:
    def test_kg_mode_logs_crossing_and_goes_negative(self, kg_trajectory):
        kinds = [e.kind for e in kg_trajectory.events]
        assert CHI_ZERO_CROSSING in kinds
        assert FIELD_FROZEN not in kinds
        cols = kg_trajectory.as_arrays()
        assert cols["chi"].min() < 0.0

    def test_kg_and_paper_agree_before_crossing(self, ref_trajectory, kg_trajectory):
        """The two continuations are the same trajectory until chi hits 0."""
        ref = ref_trajectory.as_arrays()
        kg = kg_trajectory.as_arrays()
        pre = ref["t"] < 0.07
        np.testing.assert_allclose(ref["u"][pre], kg["u"][pre], rtol=1e-12)
        np.testing.assert_allclose(ref["phi"][pre], kg["phi"][pre], rtol=1e-12)

    def test_contracting_rejected_without_override(self):
        params = ModelParams(lam=1.0, mass=1.0)
        data = make_initial_data(params, 1.0, 1.0, 0.1, 0.05, "contracting")
        with pytest.raises(InadmissibleInitialData):
            integrate(data, params, REF_CONFIG)

    def test_contracting_with_override_trips_guard(self):
        """Collapse blows up u; the guard aborts with a partial trajectory."""
        params = ModelParams(lam=1.0, mass=1.0)
        data = make_initial_data(params, 1.0, 1.0, 0.1, 0.05, "contracting")
        cfg = replace(REF_CONFIG, override_admissibility=True)
        traj = integrate(data, params, cfg)
        assert traj.guard_tripped
        assert 0 < len(traj.samples) < 1001
        trip = [e for e in traj.events if e.kind == GUARD_TRIPPED][0]
        assert trip.t < cfg.t_end

    def test_inconsistent_data_rejected(self):
        """Explicit u0 that breaks the constraint is refused outright."""
        from rwcosmo import InitialData
        params = ModelParams(lam=1.0, mass=1.0)
        data = InitialData(a0=1.0, u0=5.0, phi0=1.0, chi0=0.1, rho0=0.05)
        with pytest.raises(ValueError, match="constraint"):
            integrate(data, params, REF_CONFIG)

    def test_immediate_freeze_for_zero_chi0(self):
        """chi0 = 0 with m^2 phi0 > 0 freezes at t = 0 in paper mode."""
        params = ModelParams(lam=1.0, mass=1.0)
        data = make_initial_data(params, 1.0, 1.0, 0.0, 0.05, "expanding")
        traj = integrate(data, params, replace(REF_CONFIG, t_end=1.0))
        frozen = [e for e in traj.events if e.kind == FIELD_FROZEN]
        assert len(frozen) == 1 and frozen[0].t == 0.0
        cols = traj.as_arrays()
        assert np.all(cols["chi"] == 0.0)
        assert np.all(cols["phi"] == 1.0)

    def test_underflow_on_hopeless_tolerance(self):
        """h_min close to h_max leaves no room to resolve the dynamics."""
        params = ModelParams(lam=1.0, mass=1.0)
        data = make_initial_data(params, 1.0, 1.0, 0.1, 0.05, "expanding")
        cfg = replace(REF_CONFIG, rel_tol=1e-14, abs_tol=1e-14,
                      h_min=0.05, h_init=0.1, h_max=0.25, t_end=1.0)
        with pytest.raises(StepSizeUnderflow):
            integrate(data, params, cfg)


class TestDenseOutputQuality:
    def test_samples_match_direct_integration(self, ref_trajectory, ref_initial):
        """Interpolated samples agree with a run stopped exactly there."""
        target = 0.34  # a grid time generic for the reference step sequence
        cfg = replace(REF_CONFIG, t_end=target, sample_dt=target)
        direct = integrate(ref_initial, REF_PARAMS, cfg)
        s_direct = direct.samples[-1][0]
        cols = ref_trajectory.as_arrays()
        i = int(round(target / 0.01))
        assert cols["t"][i] == pytest.approx(target, abs=1e-12)
        np.testing.assert_allclose(
            [cols["u"][i], cols["v"][i], cols["phi"][i], cols["chi"][i], cols["rho"][i]],
            [s_direct.u, s_direct.v, s_direct.phi, s_direct.chi, s_direct.rho],
            rtol=1e-8, atol=1e-12)
