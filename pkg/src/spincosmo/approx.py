"""Instantaneous-tilt approximation and closed-form reference solutions.

The contraction of a large closed universe splits into two eras separated by
the tilt radius R_tilt where the two components of the Bloch precession axis
balance:

Era I  (R > R_tilt): the axis is frozen along e1; w1 stays at its turning
    value w1_max while (w2, w3) precess at angular speed 2m, and R(t) follows
    the dust cycloid with constant c = -m * w1_max.

Era II (R < R_tilt): the axis tilts abruptly to e2; w2 freezes at its value
    when R crosses R_tilt and (w1, w3) rotate by the explicit angle

        theta(R) = arctan(R_tilt/R_qu) - arctan(R/R_qu),

    so the scale function obeys

        Rdot^2 + 1 = -(sqrt(lambda^2+m^2 R^2)/R^2)
                     * (w1_max cos(theta) + rho sin(phi_tilt) sin(theta)).

A bounce happens iff that right side vanishes at some R in [0, R_tilt); the
largest such root is the bounce radius.  Since only sin(phi_tilt) enters, a
uniformly distributed tilt phase bounces with probability at least
arccos(R_qu |w1_max| / (R_tilt rho)) / pi.

The microscopic limit shares the theta(R) rotation with Era II (with R_tilt
replaced by the initial radius) and admits a time quadrature, used as the
closed-form oracle for the epsilon -> 0 system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import bisect, brentq

from .integrate import (
    EventSpec,
    IntegratorConfig,
    Trajectory,
    crunch_event,
    extremum_event,
    integrate,
)
from .model import DerivedScales, ModelParams, derived_scales

MC_SAMPLES_DEFAULT = 10_000
MC_SEED_DEFAULT = 42


class RegimeError(ValueError):
    """Raised when parameters sit outside the validity regime of an era."""


def dust_reference(c: float, k: int, branch: str, t):
    """Scale function of the dust universe Rdot^2 + k = c/R.

    k=+1 is the cycloid R(eta) = (c/2)(1 - cos eta), t(eta) = (c/2)(eta - sin eta);
    'expanding' runs from R=0 at t=0 to the apex R=c at t=pi*c/2, 'contracting'
    starts at the apex at t=0 and reaches R=0 at t=pi*c/2.  k=0 expands as
    R = (9c/4)^(1/3) t^(2/3); k=-1 by the hyperbolic parametric form.  For
    k <= 0 there is no apex so only the expanding branch is defined.
    Returns (R, Rdot) as arrays matching t.
    """
    if not c > 0.0:
        raise ValueError(f"dust constant must be positive, got {c}")
    if branch not in ("expanding", "contracting"):
        raise ValueError(f"branch must be 'expanding' or 'contracting', got {branch!r}")
    if k != 1 and branch == "contracting":
        raise ValueError("contracting branch is defined only for k=+1 (no apex otherwise)")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    scalar = np.isscalar(t) or np.ndim(t) == 0

    if k == 0:
        if np.any(t_arr < 0.0):
            raise ValueError("t must be nonnegative")
        r = (2.25 * c) ** (1.0 / 3.0) * t_arr ** (2.0 / 3.0)
        with np.errstate(divide="ignore"):
            rdot = np.where(t_arr > 0.0, np.sqrt(c / np.where(r > 0, r, 1.0)), np.inf)
    elif k == 1:
        t_apex = 0.5 * math.pi * c
        tt = t_arr if branch == "expanding" else t_apex - t_arr
        if np.any(tt < 0.0) or np.any(tt > math.pi * c):
            raise ValueError("t outside the cycloid domain")
        eta = np.array([_invert_cycloid(c, float(ti)) for ti in tt])
        r = 0.5 * c * (1.0 - np.cos(eta))
        # Rdot = sin(eta)/(1 - cos(eta)), the parametric derivative
        with np.errstate(divide="ignore", invalid="ignore"):
            rdot = np.where(r > 0.0, np.sin(eta) / (1.0 - np.cos(eta)), np.inf)
        if branch == "contracting":
            rdot = -rdot
    else:
        if np.any(t_arr < 0.0):
            raise ValueError("t must be nonnegative")
        eta = np.array([_invert_hyperbolic(c, float(ti)) for ti in t_arr])
        r = 0.5 * c * (np.cosh(eta) - 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            rdot = np.where(r > 0.0, np.sinh(eta) / (np.cosh(eta) - 1.0), np.inf)
    if scalar:
        return float(r[0]), float(rdot[0])
    return r, rdot


def _invert_cycloid(c: float, t: float) -> float:
    """eta with (c/2)(eta - sin eta) = t on [0, 2 pi]."""
    target = 2.0 * t / c
    if target <= 0.0:
        return 0.0
    if target >= 2.0 * math.pi:
        return 2.0 * math.pi
    return brentq(lambda e: e - math.sin(e) - target, 0.0, 2.0 * math.pi, xtol=1e-15)


def _invert_hyperbolic(c: float, t: float) -> float:
    """eta with (c/2)(sinh eta - eta) = t."""
    target = 2.0 * t / c
    if target <= 0.0:
        return 0.0
    hi = 1.0
    while math.sinh(hi) - hi < target:
        hi *= 2.0
    return brentq(lambda e: math.sinh(e) - e - target, 0.0, hi, xtol=1e-15)


def radiation_reference(c: float, k: int, t):
    """Scale function of the radiation universe Rdot^2 + k = c/R^2.

    Closed form R(t)^2 = 2 sqrt(c) t - k t^2 from t=0 at R=0; for k=+1 the
    apex sits at t=sqrt(c) with R=sqrt(c) and the domain is [0, 2 sqrt(c)].
    Returns (R, Rdot).
    """
    if not c > 0.0:
        raise ValueError(f"radiation constant must be positive, got {c}")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    scalar = np.isscalar(t) or np.ndim(t) == 0
    if np.any(t_arr < 0.0):
        raise ValueError("t must be nonnegative")
    root_c = math.sqrt(c)
    if k == 1 and np.any(t_arr > 2.0 * root_c):
        raise ValueError("t beyond the crunch of the closed radiation universe")
    r_sq = 2.0 * root_c * t_arr - k * t_arr * t_arr
    r = np.sqrt(np.maximum(r_sq, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        rdot = np.where(r > 0.0, (root_c - k * t_arr) / np.where(r > 0, r, 1.0), np.inf)
    if scalar:
        return float(r[0]), float(rdot[0])
    return r, rdot


@dataclass(frozen=True)
class EraISolution:
    """Contraction from the turning radius down to the tilt radius.

    R(t) follows the contracting dust cycloid with constant c = -m * w1_max
    (apex R(0) = c); the Bloch vector precesses about e1 at angular speed 2m:
    w(t) = (w1_max, rho cos(2mt + phi_max), rho sin(2mt + phi_max)).
    """

    params: ModelParams
    scales: DerivedScales
    c: float
    phi_max: float
    t_tilt: float
    phi_tilt: float

    def r_of_t(self, t):
        return dust_reference(self.c, 1, "contracting", t)

    def w_of_t(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        phase = 2.0 * self.params.m * t_arr + self.phi_max
        w = np.stack(
            [
                np.full_like(t_arr, self.scales.w1_max),
                self.scales.rho * np.cos(phase),
                self.scales.rho * np.sin(phase),
            ],
            axis=-1,
        )
        if np.isscalar(t) or np.ndim(t) == 0:
            return w[0]
        return w


def era1_solve(params: ModelParams, r_max: float, phi_max: float) -> EraISolution:
    """Era-I solution for a contraction starting at the turning radius r_max.

    The tilt time solves R(t_tilt) = R_tilt on the cycloid; the tilt phase is
    phi_tilt = 2 m t_tilt + phi_max.  Raises RegimeError when the scale
    hierarchy R_max >> R_tilt, R_qu does not hold.
    """
    scales = derived_scales(params, r_max)
    if not scales.regime_ok:
        raise RegimeError(
            f"era-I approximation needs r_max >> r_tilt, r_qu and m r_max/lambda^3 >= 1 "
            f"(r_max={r_max}, r_tilt={scales.r_tilt:.4g}, r_qu={scales.r_qu:.4g})"
        )
    c = -params.m * scales.w1_max
    # R(t) is monotone on the contracting branch; bracket the tilt crossing.
    t_apex_to_crunch = 0.5 * math.pi * c
    t_tilt = brentq(
        lambda t: dust_reference(c, 1, "contracting", t)[0] - scales.r_tilt,
        0.0,
        t_apex_to_crunch,
        xtol=1e-14,
    )
    phi_tilt = 2.0 * params.m * t_tilt + phi_max
    return EraISolution(
        params=params,
        scales=scales,
        c=c,
        phi_max=phi_max,
        t_tilt=float(t_tilt),
        phi_tilt=float(phi_tilt),
    )


def theta_of_r(r_tilt: float, r_qu: float, r):
    """Tilt rotation angle arctan(r_tilt/r_qu) - arctan(r/r_qu); zero at r_tilt."""
    return np.arctan2(r_tilt, r_qu) - np.arctan2(r, r_qu)


@dataclass(frozen=True)
class EraIITrajectory:
    """Era-II evolution below the tilt radius with w2 frozen.

    outcome is 'bounce' (turning point with positive Rddot), 'crunch', or
    't_end'; r_bounce is set for bounces.
    """

    params: ModelParams
    scales: DerivedScales
    phi_tilt: float
    t: np.ndarray
    r: np.ndarray
    rdot: np.ndarray
    theta: np.ndarray
    w2: float
    outcome: str
    r_bounce: float | None


def _era2_g(params: ModelParams, scales: DerivedScales, sin_phi: float):
    """Rdot^2 as a function of R in Era II, plus its derivative."""
    lam, m = params.lam, params.m
    r_qu = scales.r_qu
    w1m, rho, r_tilt = scales.w1_max, scales.rho, scales.r_tilt
    rho_s = rho * sin_phi

    def g(r: float) -> float:
        s = math.sqrt(lam * lam + m * m * r * r)
        theta = math.atan2(r_tilt, r_qu) - math.atan2(r, r_qu)
        w1 = w1m * math.cos(theta) + rho_s * math.sin(theta)
        return -(s / (r * r)) * w1 - 1.0

    def g_prime(r: float) -> float:
        s_sq = lam * lam + m * m * r * r
        s = math.sqrt(s_sq)
        theta = math.atan2(r_tilt, r_qu) - math.atan2(r, r_qu)
        w1 = w1m * math.cos(theta) + rho_s * math.sin(theta)
        dtheta = -r_qu / (r_qu * r_qu + r * r)
        dw1 = (-w1m * math.sin(theta) + rho_s * math.cos(theta)) * dtheta
        df = m * m / (s * r) - 2.0 * s / r**3  # d/dR of s/R^2
        return -(df * w1 + (s / (r * r)) * dw1)

    return g, g_prime


def era2_solve(
    params: ModelParams,
    era1: EraISolution,
    t_end: float,
    config: IntegratorConfig | None = None,
    evolve_theta: bool = False,
) -> EraIITrajectory:
    """Integrate the Era-II scale equation from the tilt crossing.

    By default theta is slaved algebraically to R through theta_of_r and only
    (R, Rdot) are integrated via Rddot = G'(R)/2 with G = Rdot^2; with
    evolve_theta the rotation angle is integrated as a third equation
    (cross-check path).  Terminates at t_end, at a bounce, or at a crunch.
    """
    scales = era1.scales
    sin_phi = math.sin(era1.phi_tilt)
    g, g_prime = _era2_g(params, scales, sin_phi)
    g_tilt = g(scales.r_tilt)
    if g_tilt < 0.0:
        raise RegimeError(
            f"Era II cannot start: Rdot^2 = {g_tilt:.4g} < 0 at the tilt radius"
        )
    r_qu = scales.r_qu
    lam, m = params.lam, params.m

    # Trial stages of a rejected step may overshoot past R = 0 during a
    # crunch; an infinite slope there makes the error control shrink the step
    # until the underflow capture terminates at the last accepted state.
    if evolve_theta:
        def rhs(t, y):
            r, rdot, theta = y
            if r <= 0.0:
                return np.array([rdot, math.inf, 0.0])
            dtheta = -lam * m * rdot / (lam * lam + m * m * r * r)
            return np.array([rdot, 0.5 * g_prime(r), dtheta])

        y0 = np.array([scales.r_tilt, -math.sqrt(g_tilt), 0.0])
    else:
        def rhs(t, y):
            r = y[0]
            if r <= 0.0:
                return np.array([y[1], math.inf])
            return np.array([y[1], 0.5 * g_prime(r)])

        y0 = np.array([scales.r_tilt, -math.sqrt(g_tilt)])

    if config is None:
        config = IntegratorConfig()
    specs = [
        extremum_event(direction=+1, terminal=True),
        crunch_event(params.r_floor),
    ]
    traj = integrate(
        rhs, (era1.t_tilt, y0), t_end, config, specs, crunch_r=1e-2 * params.r_qu
    )

    outcome = "t_end"
    r_bounce = None
    if traj.status == "event:crunch":
        outcome = "crunch"
    elif traj.status.startswith("event:extremum"):
        outcome = "bounce"
        r_bounce = float(traj.events[-1].y[0])
    theta = (
        traj.y[:, 2]
        if evolve_theta
        else np.asarray(theta_of_r(scales.r_tilt, r_qu, traj.y[:, 0]))
    )
    return EraIITrajectory(
        params=params,
        scales=scales,
        phi_tilt=era1.phi_tilt,
        t=traj.t,
        r=traj.y[:, 0],
        rdot=traj.y[:, 1],
        theta=theta,
        w2=scales.rho * math.cos(era1.phi_tilt),
        outcome=outcome,
        r_bounce=r_bounce,
    )


def bounce_condition(
    params: ModelParams, scales: DerivedScales, phi_tilt: float, grid_size: int = 512
) -> tuple[bool, float | None]:
    """Decide whether the Era-II contraction turns before the singularity.

    Scans h(R) = R^2/sqrt(lambda^2 + m^2 R^2) + w1_max cos(theta(R))
    + rho sin(phi_tilt) sin(theta(R)) for sign changes on [0, R_tilt) and
    bisects each bracket to 1e-12 relative; h <= 0 along the physical branch,
    and a root is a turning point.  Returns (bounces, largest root or None).
    """
    lam, m = params.lam, params.m
    rho_s = scales.rho * math.sin(phi_tilt)

    def h(r):
        s = np.sqrt(lam * lam + m * m * r * r)
        theta = theta_of_r(scales.r_tilt, scales.r_qu, r)
        return r * r / s + scales.w1_max * np.cos(theta) + rho_s * np.sin(theta)

    grid = np.linspace(0.0, scales.r_tilt, grid_size, endpoint=False)
    values = h(grid)
    roots = []
    if values[0] == 0.0:
        roots.append(0.0)
    for i in range(len(grid) - 1):
        a, b = values[i], values[i + 1]
        if b == 0.0:
            roots.append(float(grid[i + 1]))
        elif a * b < 0.0:
            roots.append(
                float(
                    bisect(h, float(grid[i]), float(grid[i + 1]), xtol=1e-300, rtol=1e-12)
                )
            )
    if not roots:
        return False, None
    return True, max(roots)


@dataclass(frozen=True)
class BounceProbability:
    bound: float
    bound_available: bool
    mc_estimate: float
    mc_sigma: float
    n_samples: int
    seed: int


def bounce_prob_lower_bound(
    params: ModelParams,
    scales: DerivedScales,
    n_samples: int = MC_SAMPLES_DEFAULT,
    seed: int = MC_SEED_DEFAULT,
) -> BounceProbability:
    """Analytic lower bound and Monte-Carlo estimate of the bounce probability.

    For a uniformly distributed tilt phase, p >= arccos(q)/pi with
    q = R_qu |w1_max| / (R_tilt rho); q > 1 means the bound is unavailable
    (returned as 0 with the flag cleared).  The Monte-Carlo estimate draws
    phi_tilt ~ U[0, 2 pi) from a seeded generator and applies
    bounce_condition.
    """
    q = scales.r_qu * abs(scales.w1_max) / (scales.r_tilt * scales.rho)
    if q > 1.0:
        bound, available = 0.0, False
    else:
        bound, available = math.acos(q) / math.pi, True
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=n_samples)
    hits = sum(1 for phi in phases if bounce_condition(params, scales, phi)[0])
    p_hat = hits / n_samples
    sigma = math.sqrt(max(p_hat * (1.0 - p_hat), 1.0 / n_samples) / n_samples)
    return BounceProbability(
        bound=bound,
        bound_available=available,
        mc_estimate=p_hat,
        mc_sigma=sigma,
        n_samples=n_samples,
        seed=seed,
    )


@dataclass(frozen=True)
class MicroscopicSolution:
    r: np.ndarray
    theta: np.ndarray
    t: np.ndarray
    w: np.ndarray


def microscopic_solution(
    params: ModelParams,
    r_init: float,
    w3_0: float,
    r_grid,
    w2_0: float = 0.0,
) -> MicroscopicSolution:
    """Closed-form expansion of the microscopic-limit system from a bounce.

    theta(R) = arctan(r_init/R_qu) - arctan(R/R_qu); w1 = w3_0 sin(theta),
    w3 = w3_0 cos(theta), w2 constant.  The time along the trajectory is the
    quadrature t(R) = integral dR'/Rdot(R') with
    Rdot = sqrt(-(sqrt(lambda^2+m^2 R^2)/R^2) w1); the integrable inverse
    square-root endpoint is removed by the substitution u = sqrt(R - r_init).
    Requires w3_0 > 0 (the expanding branch needs w1 < 0 ahead of the start).
    """
    if not w3_0 > 0.0:
        raise ValueError(f"w3_0 must be positive, got {w3_0}")
    if not r_init > 0.0:
        raise ValueError(f"r_init must be positive, got {r_init}")
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(np.diff(r_grid) <= 0.0):
        raise ValueError("r_grid must be strictly increasing")
    if r_grid[0] < r_init:
        raise ValueError("r_grid must start at or above r_init")
    lam, m = params.lam, params.m
    r_qu = params.r_qu

    theta = theta_of_r(r_init, r_qu, r_grid)
    w1 = w3_0 * np.sin(theta)
    w3 = w3_0 * np.cos(theta)
    w = np.stack([w1, np.full_like(w1, w2_0), w3], axis=-1)

    def inv_speed_u(u: float) -> float:
        # du-integrand 2u/Rdot(r_init + u^2); finite as u -> 0
        r = r_init + u * u
        s = math.sqrt(lam * lam + m * m * r * r)
        th = math.atan2(r_init, r_qu) - math.atan2(r, r_qu)
        rdot_sq = -(s / (r * r)) * w3_0 * math.sin(th)
        if rdot_sq <= 0.0:
            # Limit value at the start of the expansion
            coeff = (math.sqrt(lam * lam + m * m * r_init * r_init) / r_init**2) * (
                w3_0 * r_qu / (r_qu * r_qu + r_init * r_init)
            )
            return 2.0 / math.sqrt(coeff)
        return 2.0 * u / math.sqrt(rdot_sq)

    u_grid = np.sqrt(np.maximum(r_grid - r_init, 0.0))
    t = np.empty_like(r_grid)
    acc = 0.0
    u_prev = 0.0
    for i, u in enumerate(u_grid):
        if u > u_prev:
            seg, _ = quad(inv_speed_u, u_prev, u, epsabs=1e-14, epsrel=1e-12, limit=200)
            acc += seg
            u_prev = u
        t[i] = acc
    return MicroscopicSolution(r=r_grid.copy(), theta=theta, t=t, w=w)
