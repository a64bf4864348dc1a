"""Time-periodic solutions of the rescaled flow by phase shooting.

A rest start (Rdot = 0, w2 = 0, w3 > 0) is reflection symmetric, so a
trajectory whose transverse phase phi = atan2(w3, w2) lands on pi/2 + n pi
at its first maximum (w2 = 0 there again) closes into a periodic orbit of
period T = 2 T_max.  The winding of phi at the maximum grows without bound
as epsilon shrinks, so the admissible epsilon form a decreasing sequence;
each one is pinned down by bisecting the continuous phase against the
nearest crossed target.

The phase is accumulated by unwrapping atan2(w3, w2) across the accepted
integration samples.  The embedded error control keeps the per-step phase
advance well below pi for any sane tolerance (near 0.25 rad at the
defaults), which is what makes the stitching safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrate import (
    IntegratorConfig,
    Trajectory,
    crunch_event,
    extremum_event,
    integrate,
    standard_events,
)
from .model import ModelParams, rescaled_system

SCAN_RATIO_DEFAULT = 0.8
PHASE_TOL_DEFAULT = 1e-10
CLOSURE_TOL_DEFAULT = 1e-6

# The target condition lives at the located maximum, so the phase there is
# only as sharp as the event time; a tight localization keeps that error
# far below the bisection tolerance.
_SHOOT_EVENT_TOL = 1e-13


class ShootingError(RuntimeError):
    """The shooting search failed to produce an admissible solution."""


class NoMaximumError(ShootingError):
    pass


class CrunchBeforeMaximumError(ShootingError):
    pass


class BracketError(ValueError):
    """The epsilon bracket does not enclose a phase target."""


class StagnationError(ShootingError):
    """Bisection exhausted float resolution; carries the best candidate.

    Raised when the winding number jumps across the bracket (the first
    maximum hops between apex wiggles of R) so the enclosed integer target
    is never attained; callers typically move on to the next bracket."""

    def __init__(self, message: str, best: "ShootingResult"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class ShootingResult:
    """Phase diagnostics of one rescaled rest-start run to its first maximum.

    target_index is the integer n whose target pi/2 + n pi lies nearest to
    phi_at_tmax; residual is the phase distance to that target.
    """

    epsilon: float
    t_max: float
    r_max: float
    phi_at_tmax: float
    target_index: int
    residual: float

    @property
    def winding(self) -> float:
        """Continuous phase accumulated past the start value pi/2, in pi units."""
        return (self.phi_at_tmax - 0.5 * math.pi) / math.pi


@dataclass(frozen=True)
class PeriodicSolution:
    epsilon: float
    period: float
    closure_residual: float
    trajectory: Trajectory
    shooting: ShootingResult

    @property
    def t_max(self) -> float:
        return 0.5 * self.period

    def extremum_counts(self) -> tuple[int, int]:
        """(minima, maxima) located strictly inside the open period.

        The endpoints are minima by construction; a located minimum within
        event tolerance of either endpoint is the endpoint itself, not an
        interior feature, and is not counted.
        """
        edge = 1e-6 * self.period
        minima = [
            ev
            for ev in self.trajectory.events_of_kind("extremum_min")
            if edge < ev.t < self.period - edge
        ]
        maxima = self.trajectory.events_of_kind("extremum_max")
        return len(minima), len(maxima)


def rest_start(params: ModelParams, epsilon: float, r_init: float,
               w2_0: float, w3_0: float) -> np.ndarray:
    """Initial data at rest on the constraint surface of the rescaled family.

    Rdot = 0 forces w1 = -eps^2 R^2 / sqrt(lam^2 + m^2 R^2); the transverse
    components are free.
    """
    lam, m = params.lam, params.m
    w1_0 = (
        -epsilon * epsilon * r_init * r_init
        / math.sqrt(lam * lam + m * m * r_init * r_init)
    )
    return np.array([r_init, 0.0, w1_0, w2_0, w3_0])


def _shoot_config(config: IntegratorConfig | None) -> IntegratorConfig:
    if config is None:
        return IntegratorConfig(event_tol=_SHOOT_EVENT_TOL)
    return config


def shoot(
    params: ModelParams,
    r_init: float,
    w3_0: float,
    epsilon: float,
    config: IntegratorConfig | None = None,
    t_end: float = 1e9,
    w2_0: float = 0.0,
) -> ShootingResult:
    """Run the rescaled flow from rest at r_init to its first maximum.

    Starts with w2 = w2_0 (0 by default; nonzero starts are the experimental
    doubled-period construction and are not reflection closed), w3 = w3_0 > 0
    and w1 fixed by the constraint, integrates to the first classified
    maximum one one branch, and returns the continuously unwrapped transverse
    phase there together with its distance to the nearest pi/2 + n pi target.
    """
    if not r_init > 0.0:
        raise ValueError(f"r_init must be positive, got {r_init}")
    if not w3_0 > 0.0:
        raise ValueError(f"w3_0 must be positive, got {w3_0}")
    system = rescaled_system(params, epsilon)
    y0 = rest_start(params, epsilon, r_init, w2_0, w3_0)
    traj = integrate(
        system,
        (0.0, y0),
        t_end,
        config=_shoot_config(config),
        event_specs=[
            extremum_event(direction=-1, terminal=True),
            crunch_event(params.r_floor),
        ],
    )
    if traj.status == "event:crunch":
        raise CrunchBeforeMaximumError(
            f"epsilon={epsilon}: collapsed to R={traj.y[-1, 0]:.4g} before any maximum"
        )
    if traj.status != "event:extremum_max":
        raise NoMaximumError(
            f"epsilon={epsilon}: no maximum within t_end={t_end} (status {traj.status})"
        )
    phi = np.unwrap(np.arctan2(traj.y[:, 4], traj.y[:, 3]))
    phi_end = float(phi[-1])
    index = round((phi_end - 0.5 * math.pi) / math.pi)
    residual = abs(phi_end - (0.5 * math.pi + index * math.pi))
    ev = traj.events[-1]
    return ShootingResult(
        epsilon=float(epsilon),
        t_max=float(ev.t),
        r_max=float(ev.y[0]),
        phi_at_tmax=phi_end,
        target_index=int(index),
        residual=float(residual),
    )


def scan_for_bracket(
    params: ModelParams,
    r_init: float,
    w3_0: float,
    eps_start: float,
    ratio: float = SCAN_RATIO_DEFAULT,
    max_legs: int = 60,
    config: IntegratorConfig | None = None,
    t_end: float = 1e9,
) -> tuple[float, float]:
    """Descend epsilon geometrically until a phase target is crossed.

    Returns (eps_lo, eps_hi) with eps_lo < eps_hi such that an integer
    winding target lies strictly between the two windings.  The scan
    granularity is heuristic; a smaller ratio takes larger strides.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    eps = eps_start
    prev = shoot(params, r_init, w3_0, eps, config=config, t_end=t_end)
    for _ in range(max_legs):
        eps_next = eps * ratio
        cur = shoot(params, r_init, w3_0, eps_next, config=config, t_end=t_end)
        if _crossed_target(prev, cur) is not None:
            return eps_next, eps
        eps, prev = eps_next, cur
    raise BracketError(
        f"no phase target crossed in {max_legs} legs from eps={eps_start} "
        f"(ratio {ratio})"
    )


def _crossed_target(lo_end: ShootingResult, hi_end: ShootingResult) -> int | None:
    """Smallest integer winding target strictly between the two shots.

    lo_end is the shot at the smaller epsilon (larger winding).
    """
    a, b = hi_end.winding, lo_end.winding
    lo, hi = (a, b) if a <= b else (b, a)
    n = math.floor(lo) + 1
    if lo < n < hi:
        return n
    return None


def find_periodic(
    params: ModelParams,
    r_init: float,
    w3_0: float,
    eps_bracket: tuple[float, float],
    phase_tol: float = PHASE_TOL_DEFAULT,
    closure_tol: float = CLOSURE_TOL_DEFAULT,
    t_floor: float = 0.0,
    config: IntegratorConfig | None = None,
    t_end: float = 1e9,
) -> PeriodicSolution:
    """Bisect epsilon inside the bracket until the phase lands on a target.

    The bracket must enclose exactly the crossing of some pi/2 + n pi (shoot
    must succeed at both ends).  After the phase residual drops below
    phase_tol, one full period 2 T_max is integrated and the closure of
    (R, Rdot, w) is verified against closure_tol; candidates with
    period <= 2 t_floor are rejected.  Bisection that exhausts float
    resolution raises StagnationError carrying the best shot.
    """
    eps_lo, eps_hi = eps_bracket
    if not 0.0 < eps_lo < eps_hi:
        raise BracketError(f"need 0 < eps_lo < eps_hi, got {eps_bracket}")
    lo_end = shoot(params, r_init, w3_0, eps_lo, config=config, t_end=t_end)
    hi_end = shoot(params, r_init, w3_0, eps_hi, config=config, t_end=t_end)
    target = _crossed_target(lo_end, hi_end)
    if target is None:
        raise BracketError(
            f"no integer winding between {hi_end.winding:.6f} (eps={eps_hi}) "
            f"and {lo_end.winding:.6f} (eps={eps_lo})"
        )

    best = min(lo_end, hi_end, key=lambda s: s.residual)
    # winding decreases with epsilon: g > 0 at eps_lo, g < 0 at eps_hi
    g_lo = lo_end.winding - target
    if g_lo < 0.0:
        eps_lo, eps_hi = eps_hi, eps_lo
    shot = best
    while True:
        mid = 0.5 * (eps_lo + eps_hi)
        if mid == eps_lo or mid == eps_hi:
            raise StagnationError(
                f"bisection stagnated at eps={mid!r} with phase residual "
                f"{best.residual:.3e} (tolerance {phase_tol:.1e})",
                best,
            )
        shot = shoot(params, r_init, w3_0, mid, config=config, t_end=t_end)
        if shot.residual < best.residual:
            best = shot
        g = shot.winding - target
        if abs(g) * math.pi < phase_tol:
            break
        if g > 0.0:
            eps_lo = mid
        else:
            eps_hi = mid

    period = 2.0 * shot.t_max
    if period <= 2.0 * t_floor:
        raise ShootingError(
            f"candidate period {period:.6g} at eps={shot.epsilon} is below "
            f"the requested floor {2.0 * t_floor:.6g}"
        )
    system = rescaled_system(params, shot.epsilon)
    y0 = rest_start(params, shot.epsilon, r_init, 0.0, w3_0)
    traj = integrate(
        system,
        (0.0, y0),
        period,
        config=_shoot_config(config),
        event_specs=standard_events(system),
    )
    closure = verify_periodicity(traj, period)
    if closure > closure_tol:
        raise ShootingError(
            f"closure residual {closure:.3e} exceeds {closure_tol:.1e} at "
            f"eps={shot.epsilon} (phase residual {shot.residual:.3e})"
        )
    return PeriodicSolution(
        epsilon=shot.epsilon,
        period=period,
        closure_residual=closure,
        trajectory=traj,
        shooting=shot,
    )


def verify_periodicity(trajectory: Trajectory, period: float) -> float:
    """Component-scaled mismatch of (R, Rdot, w) across one period.

    Compares the sample at t = period (which must exist in the trajectory)
    against the first sample; each block is normalized by its largest
    magnitude over the run so the residual is dimensionless.
    """
    if period < 0.0:
        raise ValueError(f"period must be nonnegative, got {period}")
    t = trajectory.t
    if period == 0.0:
        return 0.0
    i = int(np.argmin(np.abs(t - period)))
    if abs(float(t[i]) - period) > 1e-6 * max(period, 1.0):
        raise ValueError(
            f"no sample at t={period!r}: nearest is t={float(t[i])!r} "
            f"(last sample t={float(t[-1])!r})"
        )
    y0 = trajectory.y[0]
    yT = trajectory.y[i]
    r_scale = float(np.max(np.abs(trajectory.r)))
    rdot_scale = max(float(np.max(np.abs(trajectory.rdot))), 1e-300)
    w_scale = max(float(np.max(np.linalg.norm(trajectory.w, axis=1))), 1e-300)
    return float(
        max(
            abs(yT[0] - y0[0]) / r_scale,
            abs(yT[1] - y0[1]) / rdot_scale,
            float(np.max(np.abs(yT[2:5] - y0[2:5]))) / w_scale,
        )
    )
