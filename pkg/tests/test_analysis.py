from __future__ import annotations

import math

import numpy as np
import pytest

from spincosmo.analysis import (
    InvariantViolation,
    check_arcsin_bound,
    check_bounce_energy,
    check_concavity,
    check_scaling_laws,
    check_symmetry,
    differential_oracle,
    ec_regime_mask,
    energy_conditions,
    energy_report,
    invariant_report,
    monotone_arcs,
)
from spincosmo.integrate import (
    Event,
    IntegratorConfig,
    Trajectory,
    integrate,
    standard_events,
)
from spincosmo.model import (
    DynamicState,
    ModelParams,
    SpinorState,
    derived_scales,
    energy_momentum_arrays,
    exact_system,
    microscopic_system,
    on_shell_rdot,
    w_to_spinor,
)


def fig1_params() -> ModelParams:
    return ModelParams(lam=1.5, m=21.5, k=1)


@pytest.fixture(scope="module")
def bounce_run() -> Trajectory:
    p = fig1_params()
    sys = exact_system(p)
    sc = derived_scales(p, 10.0)
    y0 = np.array(
        [10.0, 0.0, sc.w1_max, sc.rho * math.cos(4.2), sc.rho * math.sin(4.2)]
    )
    return integrate(sys, (0.0, y0), 17.0, event_specs=standard_events(sys, sc.r_tilt))


def fabricated(p: ModelParams, t, y, events=()) -> Trajectory:
    return Trajectory(params=p, t=np.asarray(t, dtype=float),
                      y=np.asarray(y, dtype=float), events=list(events))


class TestEnergyConditions:
    def test_dust_like_point(self):
        flags = energy_conditions(1.0, 0.0)
        assert flags.weak and flags.dominant and flags.strong
        assert not flags.marginal

    def test_negative_density_fails_weak_and_dominant(self):
        flags = energy_conditions(-1.0, 0.0)
        assert not flags.weak and not flags.dominant and not flags.strong

    def test_strong_fails_under_large_pressure(self):
        # T00 = 1/R^2 with Trr just above T00/3 breaks only the strong form
        r = 2.0
        flags = energy_conditions(1.0 / r**2, 1.05 / (3.0 * r**2))
        assert flags.weak and flags.dominant and not flags.strong

    def test_negative_pressure_strong(self):
        flags = energy_conditions(1.0, -0.5)
        # max(3 Trr, Trr) = Trr for negative pressure
        assert flags.strong and flags.dominant

    def test_dominant_implies_weak_property(self):
        rng = np.random.default_rng(0)
        t00 = rng.normal(size=800)
        trr = rng.normal(size=800)
        flags = energy_conditions(t00, trr)
        assert flags.weak.dtype == bool
        assert np.all(~flags.dominant | flags.weak)

    def test_marginal_slack(self):
        flags = energy_conditions(1.0, 1.0 + 5e-13)
        assert flags.weak and flags.marginal
        tight = energy_conditions(1.0, 1.0 + 5e-13, margin=1e-14)
        assert not tight.weak

    def test_scalar_and_array_forms_agree(self):
        t00 = np.array([1.0, -0.2, 0.4])
        trr = np.array([0.1, 0.0, 0.5])
        arr = energy_conditions(t00, trr)
        for i in range(3):
            one = energy_conditions(float(t00[i]), float(trr[i]))
            assert isinstance(one.weak, bool)
            assert one == (arr.weak[i], arr.dominant[i], arr.strong[i], arr.marginal[i])


class TestEnergyReport:
    def test_per_sample_flags_and_onshell_density(self, bounce_run):
        p = fig1_params()
        rep = energy_report(p, bounce_run)
        assert rep.t00.shape == bounce_run.t.shape
        # closed-universe on-shell identity: T00 = (Rdot^2 + 1)/R^2 > 0
        ident = (bounce_run.rdot**2 + 1.0) / bounce_run.r**2
        assert np.all(rep.t00 > 0.0)
        assert np.allclose(rep.t00, ident, rtol=1e-6)
        recomputed = energy_conditions(rep.t00, rep.trr)
        assert np.array_equal(rep.weak, recomputed.weak)
        assert np.array_equal(rep.strong, recomputed.strong)

    def test_bounce_rows(self, bounce_run):
        p = fig1_params()
        rows = check_bounce_energy(p, bounce_run)
        assert len(rows) == 1
        row = rows[0]
        assert row.kind == "extremum_min"
        assert not row.strong  # strong condition must break at a bounce
        assert row.ok
        assert row.t00 > 0.0
        assert row.r < fig1_params().r_qu * 2.0

    def test_report_rows_match_bounce_rows(self, bounce_run):
        p = fig1_params()
        rep = energy_report(p, bounce_run)
        kinds = [row.kind for row in rep.event_rows]
        assert kinds.count("extremum_min") == 1

    def test_no_bounce_raises(self):
        p = fig1_params()
        sys = exact_system(p)
        sc = derived_scales(p, 10.0)
        y0 = np.array([10.0, 0.0, sc.w1_max, sc.rho, 0.0])
        traj = integrate(sys, (0.0, y0), 0.5, event_specs=standard_events(sys))
        with pytest.raises(ValueError):
            check_bounce_energy(p, traj)

    def test_stateless_event_rejected(self):
        p = fig1_params()
        ev = Event(kind="extremum_min", t=0.0, y=np.zeros(5), state=None, rddot_sign=1)
        traj = fabricated(p, [0.0], np.zeros((1, 5)), events=[ev])
        with pytest.raises(ValueError):
            check_bounce_energy(p, traj)

    def test_failing_row_returned_not_raised(self):
        # fabricated minimum where the strong condition holds: surfaces as ok=False
        p = fig1_params()
        st = DynamicState(t=1.0, r=5.0, rdot=0.0, w=np.array([-1.0, 0.0, -1.0]))
        ev = Event(kind="extremum_min", t=1.0, y=st.as_array(), state=st, rddot_sign=1)
        traj = fabricated(p, [1.0], [st.as_array()], events=[ev])
        rows = check_bounce_energy(p, traj)
        assert rows[0].strong
        assert not rows[0].ok


class TestRegimeMask:
    def test_all_three_hold_in_regime(self, bounce_run):
        p = fig1_params()
        mask = ec_regime_mask(p, bounce_run, kappa=0.2)
        assert mask.sum() > 100
        rep = energy_report(p, bounce_run)
        assert np.all(rep.weak[mask])
        assert np.all(rep.dominant[mask])
        assert np.all(rep.strong[mask])

    def test_mask_bounds(self, bounce_run):
        p = fig1_params()
        mask = ec_regime_mask(p, bounce_run, kappa=0.2)
        floor = 2.0 * p.n_particle * p.r_qu / 0.2
        assert np.all(bounce_run.r[mask] >= floor)
        assert np.all(bounce_run.w[mask, 0] <= -0.2)

    @pytest.mark.parametrize("kappa", [0.0, 1.0, -0.3])
    def test_kappa_validation(self, bounce_run, kappa):
        with pytest.raises(ValueError):
            ec_regime_mask(fig1_params(), bounce_run, kappa=kappa)


class TestOpenUniverse:
    def test_positive_w1_gives_negative_density(self):
        # spin pointing along +e1 keeps the density negative and the weak
        # condition broken for the whole arc
        p = ModelParams(lam=1.5, m=21.5, k=-1)
        w1 = 0.046
        w3 = math.sqrt(p.n_particle**2 - w1 * w1)
        rdot0 = on_shell_rdot(p, 10.0, w1)
        assert rdot0 < 0.0
        y0 = np.array([10.0, rdot0, w1, 0.0, w3])
        traj = integrate(exact_system(p), (0.0, y0), 5.0)
        t00, trr = energy_momentum_arrays(p, traj.r, traj.w[:, 0], traj.w[:, 2])
        assert np.all(traj.w[:, 0] > 0.0)
        assert np.all(t00 < 0.0)
        # open-universe on-shell identity T00 = (Rdot^2 - 1)/R^2
        ident = (traj.rdot**2 - 1.0) / traj.r**2
        assert np.allclose(t00, ident, rtol=1e-9)
        flags = energy_conditions(t00, trr)
        assert not flags.weak.any()
        assert not flags.dominant.any()


class TestMonotoneArcs:
    def test_bounce_run_has_two_arcs(self, bounce_run):
        arcs = monotone_arcs(bounce_run)
        assert len(arcs) == 2
        (a0, a1), (b0, b1) = arcs
        tb = bounce_run.events_of_kind("extremum_min")[0].t
        assert a0 < a1 <= tb <= b0 < b1

    def test_sign_pattern(self):
        p = fig1_params()
        t = np.arange(7.0)
        y = np.zeros((7, 5))
        y[:, 0] = 1.0
        y[:, 1] = [0.0, -1.0, -1.0, -1.0, 0.0, 2.0, 2.0]
        arcs = monotone_arcs(fabricated(p, t, y))
        assert arcs == [(1.0, 3.0), (5.0, 6.0)]

    def test_adjacent_flip_without_zero_sample(self):
        p = fig1_params()
        t = np.arange(4.0)
        y = np.zeros((4, 5))
        y[:, 0] = 1.0
        y[:, 1] = [-1.0, -1.0, 1.0, 1.0]
        assert monotone_arcs(fabricated(p, t, y)) == [(0.0, 1.0), (2.0, 3.0)]

    def test_all_rest_gives_no_arcs(self):
        p = fig1_params()
        y = np.zeros((5, 5))
        y[:, 0] = 1.0
        assert monotone_arcs(fabricated(p, np.arange(5.0), y)) == []


class TestArcsinBound:
    def test_holds_on_bounce_run_arcs(self, bounce_run):
        p = fig1_params()
        for t0, t1 in monotone_arcs(bounce_run):
            margin = check_arcsin_bound(p, bounce_run, t0, t1, tol=1e-10)
            assert margin <= 1e-10

    def test_saturated_when_w2_zero(self):
        # without a w2 component the turning angle tracks the radius exactly
        p = ModelParams(lam=1.5, m=3.0, k=1)
        y0 = np.array([0.2, 0.0, 0.0, 0.0, p.n_particle])
        traj = integrate(microscopic_system(p), (0.0, y0), 30.0)
        t0, t1 = monotone_arcs(traj)[0]
        margin = check_arcsin_bound(p, traj, t0, t1)
        assert abs(margin) < 1e-8

    def test_point_window_is_zero(self, bounce_run):
        t0 = float(bounce_run.t[10])
        assert check_arcsin_bound(fig1_params(), bounce_run, t0, t0) == 0.0

    def test_rejects_window_across_bounce(self, bounce_run):
        with pytest.raises(ValueError):
            check_arcsin_bound(fig1_params(), bounce_run, 0.0, 17.0)

    def test_rejects_reversed_window(self, bounce_run):
        with pytest.raises(ValueError):
            check_arcsin_bound(fig1_params(), bounce_run, 5.0, 1.0)

    def test_rejects_empty_window(self, bounce_run):
        with pytest.raises(ValueError):
            check_arcsin_bound(fig1_params(), bounce_run, 100.0, 101.0)

    def test_violation_raises(self):
        # fabricated swing of w1 at frozen radius breaks the bound
        p = fig1_params()
        n = p.n_particle
        y = np.array([
            [1.0, 1.0, 0.0, 0.0, n],
            [1.0, 1.0, 0.9 * n, 0.0, math.sqrt(1.0 - 0.81) * n],
        ])
        traj = fabricated(p, [0.0, 1.0], y)
        with pytest.raises(InvariantViolation):
            check_arcsin_bound(p, traj, 0.0, 1.0)


class TestConcavity:
    def test_zero_violations_on_bounce_run(self, bounce_run):
        assert check_concavity(fig1_params(), bounce_run) == 0

    def test_fabricated_violation_counted(self):
        # off-norm state with large w3 pushes Rddot positive at R^2 > lambda N
        p = fig1_params()
        y = np.array([[3.0, 0.0, 0.0, 0.0, 20.0]])
        assert check_concavity(p, fabricated(p, [0.0], y)) == 1

    def test_small_radius_not_eligible(self):
        p = fig1_params()
        y = np.array([[0.05, 0.0, 0.0, 0.0, 20.0]])
        # same aggressive state but R^2 < lambda N: outside the guarantee
        assert check_concavity(p, fabricated(p, [0.0], y)) == 0


class TestSymmetry:
    def test_rest_start_is_reflection_symmetric(self):
        p = fig1_params()
        res = check_symmetry(p, 5.0, 0.0, 1.2, 3.0, system=exact_system(p))
        assert res <= 10.0 * IntegratorConfig().rel_tol

    def test_residual_scales_with_tolerance(self):
        p = fig1_params()
        cfg = IntegratorConfig(rel_tol=1e-9, abs_tol=1e-11)
        res = check_symmetry(p, 5.0, 0.0, 1.2, 3.0, system=exact_system(p), config=cfg)
        assert res <= 10.0 * cfg.rel_tol

    def test_default_system_is_microscopic(self):
        res = check_symmetry(fig1_params(), 5.0, 0.0, 1.2, 2.0)
        assert res <= 10.0 * IntegratorConfig().rel_tol

    def test_nonzero_w2_breaks_reflection(self):
        res = check_symmetry(fig1_params(), 5.0, 0.8, 1.2, 3.0,
                             system=exact_system(fig1_params()))
        assert res > 1e-3

    def test_zero_horizon(self):
        assert check_symmetry(fig1_params(), 5.0, 0.0, 1.2, 0.0) == 0.0

    def test_negative_horizon_rejected(self):
        with pytest.raises(ValueError):
            check_symmetry(fig1_params(), 5.0, 0.0, 1.2, -1.0)


class TestScalingLaws:
    def params(self) -> ModelParams:
        return ModelParams(lam=1.5, m=3.0, k=1)

    def test_slopes_near_asymptote(self):
        p = self.params()
        cfg = IntegratorConfig(rel_tol=1e-8, abs_tol=1e-10)
        rep = check_scaling_laws(p, 0.1 * p.r_qu, p.n_particle, [0.2, 0.1], config=cfg)
        assert all(row.status == "event:extremum_max" for row in rep.rows)
        assert rep.excluded() == ()
        assert rep.slope_r == pytest.approx(-2.0, abs=0.4)
        assert rep.slope_t == pytest.approx(-3.0, abs=0.4)
        # smaller epsilon expands farther and longer
        assert rep.rows[1].r_max > rep.rows[0].r_max
        assert rep.rows[1].t_max > rep.rows[0].t_max

    def test_non_turning_entries_excluded(self):
        p = self.params()
        cfg = IntegratorConfig(rel_tol=1e-8, abs_tol=1e-10)
        with pytest.raises(InvariantViolation):
            check_scaling_laws(p, 0.1 * p.r_qu, p.n_particle, [0.2, 0.1],
                               config=cfg, t_end=1.0)

    def test_needs_two_epsilons(self):
        with pytest.raises(ValueError):
            check_scaling_laws(self.params(), 0.05, 2.0, [0.1])


class TestDifferentialOracle:
    def test_zero_horizon_is_exact(self):
        p = fig1_params()
        sc = derived_scales(p, 10.0)
        w0 = np.array([sc.w1_max, sc.rho, 0.0])
        a, b = w_to_spinor(p, 10.0, w0)
        init = SpinorState(t=0.0, r=10.0, rdot=0.0, alpha=a, beta=b)
        rep = differential_oracle(p, init, 0.0, n_samples=8)
        assert rep.divergence < 1e-14
        assert rep.bloch_norm_drift < 1e-14

    def test_full_bounce_divergence(self):
        p = fig1_params()
        sc = derived_scales(p, 10.0)
        w0 = np.array([sc.w1_max, sc.rho * math.cos(4.2), sc.rho * math.sin(4.2)])
        a, b = w_to_spinor(p, 10.0, w0)
        init = SpinorState(t=0.0, r=10.0, rdot=0.0, alpha=a, beta=b)
        rep = differential_oracle(p, init, 16.5)
        assert rep.divergence < 1e-6
        assert rep.bloch_norm_drift < 1e-10
        assert rep.spinor_norm_drift < 1e-10


class TestInvariantReport:
    def test_rollup(self, bounce_run):
        p = fig1_params()
        rep = invariant_report(p, bounce_run)
        assert rep.max_norm_drift < 1e-10
        assert rep.max_constraint_residual < 1e-8
        assert rep.arcsin_margin <= 1e-10
        assert rep.concavity_violations == 0
        assert rep.symmetry_residual is None
        assert rep.scaling_exponents is None

    def test_attachments_pass_through(self, bounce_run):
        rep = invariant_report(fig1_params(), bounce_run,
                               symmetry_residual=0.0,
                               scaling_exponents=(-2.04, -3.04))
        assert rep.symmetry_residual == 0.0
        assert rep.scaling_exponents == (-2.04, -3.04)
