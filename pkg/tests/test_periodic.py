"""Tests for the time-periodic solution search.

Anchors (first-maximum times, windings, and the located epsilon) were
measured once at the default tolerances and pinned with generous margins;
they guard against regressions in the shooting map, not against the
integrator's last digit.
"""

import math

import numpy as np
import pytest

from spincosmo.integrate import integrate
from spincosmo.model import ModelParams, rescaled_system
from spincosmo.periodic import (
    BracketError,
    CrunchBeforeMaximumError,
    NoMaximumError,
    PeriodicSolution,
    ShootingError,
    ShootingResult,
    StagnationError,
    find_periodic,
    scan_for_bracket,
    shoot,
    verify_periodicity,
)

R_INIT = 0.5
W3_INIT = 2.0  # particle number for lam = 3/2


@pytest.fixture(scope="module")
def params():
    return ModelParams(lam=1.5, m=3.0, k=1)


@pytest.fixture(scope="module")
def solution(params):
    # bracket straddles the n = 7 phase target
    return find_periodic(params, R_INIT, W3_INIT, (0.475, 0.485))


class TestShoot:
    def test_first_maximum_anchor(self, params):
        res = shoot(params, R_INIT, W3_INIT, 0.5)
        assert res.t_max == pytest.approx(5.2246, abs=5e-3)
        assert res.r_max == pytest.approx(2.0766, abs=5e-3)
        assert res.target_index == 5
        assert 0.0 <= res.residual <= math.pi / 2

    def test_winding_grows_as_epsilon_shrinks(self, params):
        windings = [
            shoot(params, R_INIT, W3_INIT, eps).winding
            for eps in (0.5, 0.45, 0.4)
        ]
        assert windings[0] == pytest.approx(5.340, abs=5e-2)
        assert windings[1] == pytest.approx(8.933, abs=5e-2)
        assert windings[2] == pytest.approx(13.469, abs=5e-2)
        assert windings[0] < windings[1] < windings[2]

    def test_winding_is_phase_offset_in_half_turns(self):
        res = ShootingResult(
            epsilon=0.3,
            t_max=1.0,
            r_max=2.0,
            phi_at_tmax=math.pi / 2 + 3 * math.pi,
            target_index=3,
            residual=0.0,
        )
        assert res.winding == pytest.approx(3.0, abs=1e-15)

    def test_no_maximum_within_horizon(self, params):
        with pytest.raises(NoMaximumError):
            shoot(params, R_INIT, W3_INIT, 0.5, t_end=1.0)

    def test_crunch_before_maximum(self, params):
        # negligible spin support at full coupling collapses immediately
        with pytest.raises(CrunchBeforeMaximumError):
            shoot(params, 0.05, 1e-6, 1.0)

    @pytest.mark.parametrize("r_init,w3_0", [
        (0.0, 2.0),
        (-1.0, 2.0),
        (0.5, 0.0),
        (0.5, -2.0),
    ])
    def test_rejects_bad_start(self, params, r_init, w3_0):
        with pytest.raises(ValueError):
            shoot(params, r_init, w3_0, 0.5)

    @pytest.mark.parametrize("eps", [0.0, -0.2])
    def test_rejects_bad_epsilon(self, params, eps):
        with pytest.raises(ValueError):
            shoot(params, R_INIT, W3_INIT, eps)


class TestScanForBracket:
    def test_bracket_straddles_integer_winding(self, params):
        lo, hi = scan_for_bracket(params, R_INIT, W3_INIT, 0.52, ratio=0.99)
        assert 0.0 < lo < hi <= 0.52
        w_lo = shoot(params, R_INIT, W3_INIT, lo).winding
        w_hi = shoot(params, R_INIT, W3_INIT, hi).winding
        assert math.floor(w_hi) < math.floor(w_lo)

    @pytest.mark.parametrize("ratio", [0.0, 1.0, 1.2, -0.5])
    def test_ratio_validated(self, params, ratio):
        with pytest.raises(ValueError):
            scan_for_bracket(params, R_INIT, W3_INIT, 0.5, ratio=ratio)

    def test_leg_budget_exhaustion(self, params):
        with pytest.raises(BracketError):
            scan_for_bracket(params, R_INIT, W3_INIT, 0.52, ratio=0.99,
                             max_legs=2)


class TestFindPeriodic:
    def test_closure_below_tolerance(self, solution):
        assert isinstance(solution, PeriodicSolution)
        assert solution.closure_residual < 1e-6
        assert solution.shooting.residual < 1e-10

    def test_period_is_twice_first_maximum(self, solution):
        assert solution.period == 2.0 * solution.shooting.t_max
        assert solution.t_max == solution.shooting.t_max

    def test_epsilon_inside_bracket(self, solution):
        assert 0.475 < solution.epsilon < 0.485
        assert solution.shooting.target_index == 7

    def test_single_maximum_no_interior_minima(self, solution):
        assert solution.extremum_counts() == (0, 1)

    def test_starts_at_rest_minimum(self, solution):
        tr = solution.trajectory
        assert tr.r[0] == R_INIT
        assert tr.rdot[0] == 0.0
        assert tr.w[0, 1] == 0.0
        assert tr.w[0, 0] < 0.0

    def test_half_period_mirror(self, params, solution):
        tm = 0.5 * solution.period
        s = np.linspace(0.0, 0.95 * tm, 60)
        t_eval = np.sort(np.concatenate([tm - s, tm + s]))
        system = rescaled_system(params, solution.epsilon)
        y0 = solution.trajectory.y[0].copy()
        tr = integrate(system, (0.0, y0), solution.period, t_eval=t_eval)
        r_plus = np.interp(tm + s, tr.t, tr.r)
        r_minus = np.interp(tm - s, tr.t, tr.r)
        assert np.max(np.abs(r_plus - r_minus)) < 1e-8
        w2_plus = np.interp(tm + s, tr.t, tr.y[:, 3])
        w2_minus = np.interp(tm - s, tr.t, tr.y[:, 3])
        assert np.max(np.abs(w2_plus + w2_minus)) < 1e-8

    def test_deterministic(self, params, solution):
        again = find_periodic(params, R_INIT, W3_INIT, (0.475, 0.485))
        assert again.epsilon == solution.epsilon
        assert again.closure_residual == solution.closure_residual

    def test_no_target_in_bracket(self, params):
        with pytest.raises(BracketError):
            find_periodic(params, R_INIT, W3_INIT, (0.4995, 0.5))

    @pytest.mark.parametrize("bracket", [(0.485, 0.475), (0.48, 0.48)])
    def test_bad_bracket(self, params, bracket):
        with pytest.raises(BracketError):
            find_periodic(params, R_INIT, W3_INIT, bracket)

    def test_stagnation_carries_best_shot(self, params):
        # the winding jumps across this bracket, so the enclosed integer
        # target is never attained and bisection exhausts float resolution
        with pytest.raises(StagnationError) as excinfo:
            find_periodic(params, R_INIT, W3_INIT, (0.490, 0.494))
        best = excinfo.value.best
        assert isinstance(best, ShootingResult)
        assert 0.490 <= best.epsilon <= 0.494
        assert best.residual > 0.1

    def test_t_floor_rejects_short_period(self, params):
        with pytest.raises(ShootingError):
            find_periodic(params, R_INIT, W3_INIT, (0.475, 0.485),
                          t_floor=20.0)


class TestVerifyPeriodicity:
    def test_matches_stored_closure(self, solution):
        res = verify_periodicity(solution.trajectory, solution.period)
        assert res == solution.closure_residual

    def test_zero_period(self, solution):
        assert verify_periodicity(solution.trajectory, 0.0) == 0.0

    def test_negative_period_rejected(self, solution):
        with pytest.raises(ValueError):
            verify_periodicity(solution.trajectory, -1.0)

    def test_wrong_period_is_loud(self, solution):
        t = solution.trajectory.t
        i = int(np.argmin(np.abs(t - 0.6 * solution.period)))
        assert verify_periodicity(solution.trajectory, float(t[i])) > 1e-3

    def test_period_off_the_sample_grid_rejected(self, solution):
        t = solution.trajectory.t
        midpoint = 0.5 * float(t[5] + t[6])
        with pytest.raises(ValueError):
            verify_periodicity(solution.trajectory, midpoint)
