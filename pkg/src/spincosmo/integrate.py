"""Adaptive embedded Runge-Kutta integration with located, classified events.

A thin driver around scipy's RK45 (embedded 5(4) pair, quartic dense output)
and DOP853 stepper classes.  The driver adds what the library needs on top of
plain stepping: a hard step budget, per-segment dense output, sign-change
event detection with root localization on the interpolant, extremum
classification through the right-hand side, and trajectory diagnostics
(constraint residual, Bloch-norm drift, step counts).

Works for any vector field f(t, y) whose first two components are (R, Rdot);
when f is a model.BlochSystem the physics diagnostics and event states are
filled in as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.integrate import DOP853, RK45
from scipy.optimize import brentq

from .model import BlochSystem, DynamicState, ModelParams

EVENT_KINDS = (
    "extremum_min",
    "extremum_max",
    "extremum_degenerate",
    "crunch",
    "w2_zero",
    "tilt_crossing",
)

_STEPPERS = {"rk45": RK45, "dop853": DOP853}
_STAGES = {"rk45": 6, "dop853": 12}

# Relative R-acceleration below this threshold cannot be trusted to decide
# min vs max; such extrema are flagged degenerate instead.
DEGENERACY_FACTOR = 1e-10

# A step-size underflow with R below this fraction of R_qu is a resolved
# collapse, not a failure: with w1 < 0 pinned (forced by the constraint as
# R -> 0) no turning point exists below R_qu, and the remaining time to the
# singularity shrinks under the representable step size long before R reaches
# the nominal floor.  Such terminations become crunch events.
CRUNCH_CAPTURE_FACTOR = 1e-2


class IntegrationError(RuntimeError):
    """Base for numerical integration failures; carries the last state."""

    def __init__(self, message: str, t: float | None = None, y: np.ndarray | None = None):
        super().__init__(message)
        self.t = t
        self.y = y


class StepSizeUnderflowError(IntegrationError):
    pass


class MaxStepsExceededError(IntegrationError):
    pass


class EventLocationError(ValueError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    # Defaults keep Bloch-norm drift below 1e-10 over a full bounce while
    # staying above the roundoff floor of the constraint residual, so
    # tightening rel_tol still reduces both; looser tolerances or the
    # lower-order stepper leak norm at the 1e-8 level.
    rel_tol: float = 5e-12
    abs_tol: float = 5e-14
    max_step: float = math.inf
    max_steps: int = 2_000_000
    event_tol: float = 1e-10
    method: str = "dop853"

    def __post_init__(self) -> None:
        if not 0.0 < self.rel_tol < 1.0 or not 0.0 < self.abs_tol < 1.0:
            raise ValueError("rel_tol and abs_tol must lie in (0, 1)")
        if not self.event_tol > 0.0:
            raise ValueError("event_tol must be positive")
        if not self.max_step > 0.0:
            raise ValueError("max_step must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.method not in _STEPPERS:
            raise ValueError(f"method must be one of {sorted(_STEPPERS)}, got {self.method!r}")


@dataclass(frozen=True)
class EventSpec:
    """Sign-change detector: kind label, scalar function g(t, y), crossing
    direction (-1 decreasing, +1 increasing, 0 both), terminal flag."""

    kind: str
    fn: Callable[[float, np.ndarray], float]
    direction: int = 0
    terminal: bool = False


@dataclass(frozen=True)
class Event:
    kind: str
    t: float
    y: np.ndarray
    state: DynamicState | None
    rddot_sign: int


@dataclass(frozen=True)
class Diagnostics:
    n_steps: int
    n_rejected: int
    n_rhs_evals: int
    max_constraint_residual: float | None
    max_norm_drift: float | None


@dataclass
class Trajectory:
    """Sampled solution with located events.

    Samples are the accepted step endpoints (or the caller's t_eval grid) in
    strictly advancing time order; y rows are the flat state vectors.
    """

    params: ModelParams | None
    t: np.ndarray
    y: np.ndarray
    events: list[Event] = field(default_factory=list)
    diagnostics: Diagnostics | None = None
    status: str = "t_end"

    @property
    def r(self) -> np.ndarray:
        return self.y[:, 0]

    @property
    def rdot(self) -> np.ndarray:
        return self.y[:, 1]

    @property
    def w(self) -> np.ndarray:
        return self.y[:, 2:5]

    def states(self) -> Iterator[DynamicState]:
        for i in range(len(self.t)):
            yield DynamicState.from_array(float(self.t[i]), self.y[i])

    def events_of_kind(self, *kinds: str) -> list[Event]:
        return [ev for ev in self.events if ev.kind in kinds]


def extremum_event(direction: int = 0, terminal: bool = False) -> EventSpec:
    """Rdot = 0 crossing; located roots are classified min/max/degenerate."""
    return EventSpec("extremum", lambda t, y: y[1], direction=direction, terminal=terminal)


def crunch_event(r_floor: float) -> EventSpec:
    return EventSpec("crunch", lambda t, y: y[0] - r_floor, direction=-1, terminal=True)


def w2_zero_event(direction: int = 0) -> EventSpec:
    return EventSpec("w2_zero", lambda t, y: y[3], direction=direction)


def tilt_crossing_event(r_tilt: float, direction: int = 0) -> EventSpec:
    return EventSpec("tilt_crossing", lambda t, y: y[0] - r_tilt, direction=direction)


def standard_events(system: BlochSystem, r_tilt: float | None = None) -> list[EventSpec]:
    specs = [extremum_event(), crunch_event(system.params.r_floor)]
    if r_tilt is not None:
        specs.append(tilt_crossing_event(r_tilt))
    return specs


def classify_extremum(
    params: ModelParams,
    state: DynamicState,
    kappa_eff: float | None = None,
    norm_bound: float | None = None,
) -> str:
    """Decide min/max at a turning point from the sign of Rddot.

    Degenerate when |Rddot| falls below DEGENERACY_FACTOR times the
    characteristic acceleration scale of the state; that regime is flagged,
    never silently classified.
    """
    if kappa_eff is None:
        kappa_eff = float(params.k)
    lam, m = params.lam, params.m
    r = state.r
    root = math.sqrt(lam * lam + m * m * r * r)
    v3 = (lam * state.w[2] - m * r * state.w[0]) / root
    rddot = (-2.0 * (state.rdot**2 + kappa_eff) + (m / r) * v3) / (2.0 * r)
    if norm_bound is None:
        norm_bound = float(np.linalg.norm(state.w))
    char = (2.0 * (state.rdot**2 + abs(kappa_eff)) + (m / r) * norm_bound) / (2.0 * r)
    return _label_rddot(rddot, DEGENERACY_FACTOR * char)


def _label_rddot(rddot: float, threshold: float) -> str:
    if abs(rddot) <= threshold:
        return "degenerate"
    return "min" if rddot > 0.0 else "max"


def locate_event(
    dense_segment,
    event_fn: Callable[[float, np.ndarray], float],
    event_tol: float = 1e-10,
    t_lo: float | None = None,
    t_hi: float | None = None,
) -> float:
    """Root of event_fn on a dense-output segment, localized to event_tol.

    Uses safeguarded bracketing root finding on the interpolant; raises
    EventLocationError when the function does not change sign.
    """
    a = dense_segment.t_old if t_lo is None else t_lo
    b = dense_segment.t if t_hi is None else t_hi
    ga = event_fn(a, dense_segment(a))
    gb = event_fn(b, dense_segment(b))
    if ga == 0.0:
        return float(a)
    if gb == 0.0:
        return float(b)
    if math.copysign(1.0, ga) == math.copysign(1.0, gb):
        raise EventLocationError(
            f"event function does not change sign on [{a}, {b}] (g={ga:.3e} .. {gb:.3e})"
        )
    lo, hi = (a, b) if a < b else (b, a)
    return float(
        brentq(lambda tt: event_fn(tt, dense_segment(tt)), lo, hi, xtol=event_tol)
    )


def _crossed(g_old: float, g_new: float, direction: int) -> bool:
    if g_old == 0.0 or g_old * g_new > 0.0:
        return False
    if g_new == 0.0 and g_old == 0.0:
        return False
    if direction > 0:
        return g_old < 0.0
    if direction < 0:
        return g_old > 0.0
    return True


def _event_from_root(rhs, spec: EventSpec, t_star: float, y_star: np.ndarray) -> Event:
    rddot = float(rhs(t_star, y_star)[1])
    if isinstance(rhs, BlochSystem):
        state = DynamicState.from_array(t_star, y_star)
        label = classify_extremum(rhs.params, state, kappa_eff=rhs.kappa_eff)
    else:
        state = None
        label = _label_rddot(rddot, 0.0)
    if spec.kind == "extremum":
        kind = f"extremum_{label}"
    else:
        kind = spec.kind
    sign = 0 if label == "degenerate" and spec.kind == "extremum" else int(np.sign(rddot))
    return Event(kind=kind, t=float(t_star), y=np.array(y_star), state=state, rddot_sign=sign)


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    initial,
    t_end: float,
    config: IntegratorConfig | None = None,
    event_specs: Sequence[EventSpec] = (),
    t_eval: np.ndarray | None = None,
    crunch_r: float | None = None,
) -> Trajectory:
    """Advance rhs from the initial state to t_end with embedded error control.

    initial may be a DynamicState or a (t0, y0) pair.  Terminates at t_end or
    at the first terminal event; raises StepSizeUnderflowError or
    MaxStepsExceededError on numerical failure.  When t_eval is given the
    samples are the dense-output values on that grid instead of the accepted
    steps.  A step-size underflow with y[0] below crunch_r terminates as a
    crunch event instead of raising (default: CRUNCH_CAPTURE_FACTOR * R_qu
    for model right-hand sides).
    """
    if config is None:
        config = IntegratorConfig()
    if isinstance(initial, DynamicState):
        t0, y0 = initial.t, initial.as_array()
    else:
        t0, y0 = initial
        y0 = np.asarray(y0, dtype=float)
    params = rhs.params if isinstance(rhs, BlochSystem) else None
    if crunch_r is None and params is not None:
        crunch_r = CRUNCH_CAPTURE_FACTOR * params.r_qu

    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)

    if t_end == t0:
        ts, ys = np.array([t0]), np.array([y0])
        if t_eval is not None:
            ts = t_eval.copy()
            ys = np.tile(y0, (len(t_eval), 1))
        return Trajectory(
            params, ts, ys, [], _diagnostics(rhs, ys, 0, 0, 0), status="t_end"
        )

    direction = 1.0 if t_end > t0 else -1.0
    stepper = _STEPPERS[config.method](
        rhs,
        t0,
        y0,
        t_bound=t_end,
        rtol=config.rel_tol,
        atol=config.abs_tol,
        max_step=config.max_step,
    )

    record_steps = t_eval is None
    sample_t: list[float] = [t0] if record_steps else []
    sample_y: list[np.ndarray] = [y0.copy()] if record_steps else []
    eval_idx = 0
    events: list[Event] = []
    g_prev = [spec.fn(t0, y0) for spec in event_specs]
    n_steps = 0
    n_dense = 0
    status = "t_end"

    while stepper.status == "running":
        if n_steps >= config.max_steps:
            raise MaxStepsExceededError(
                f"exceeded max_steps={config.max_steps} at t={stepper.t}",
                t=stepper.t,
                y=stepper.y,
            )
        stepper.step()
        if stepper.status == "failed":
            if crunch_r is not None and stepper.y[0] < crunch_r:
                state = (
                    DynamicState.from_array(float(stepper.t), stepper.y)
                    if params is not None
                    else None
                )
                ev = Event(
                    kind="crunch",
                    t=float(stepper.t),
                    y=np.array(stepper.y),
                    state=state,
                    rddot_sign=int(np.sign(rhs(stepper.t, stepper.y)[1])),
                )
                events.append(ev)
                if record_steps:
                    sample_t.append(float(stepper.t))
                    sample_y.append(np.array(stepper.y))
                status = "event:crunch"
                n_steps += 1
                break
            raise StepSizeUnderflowError(
                f"step size underflow at t={stepper.t} (R={stepper.y[0]:.6g})",
                t=stepper.t,
                y=stepper.y,
            )
        n_steps += 1
        t_old, t_new, y_new = stepper.t_old, stepper.t, stepper.y

        dense = None
        crossings: list[tuple[float, Event, bool]] = []
        for i, spec in enumerate(event_specs):
            g_new = spec.fn(t_new, y_new)
            if _crossed(g_prev[i], g_new, spec.direction * int(direction)):
                if dense is None:
                    dense = stepper.dense_output()
                    n_dense += 1
                t_star = locate_event(dense, spec.fn, config.event_tol)
                y_star = dense(t_star)
                ev = _event_from_root(rhs, spec, t_star, y_star)
                crossings.append((direction * (t_star - t_old), ev, spec.terminal))
            g_prev[i] = g_new
        crossings.sort(key=lambda item: item[0])

        cut: Event | None = None
        for _, ev, terminal in crossings:
            events.append(ev)
            if terminal:
                cut = ev
                break

        seg_end_t = cut.t if cut is not None else t_new
        seg_end_y = cut.y if cut is not None else y_new

        if record_steps:
            sample_t.append(float(seg_end_t))
            sample_y.append(np.array(seg_end_y))
        elif t_eval is not None:
            if dense is None and eval_idx < len(t_eval) and (
                direction * (t_eval[eval_idx] - seg_end_t) <= 0.0
            ):
                dense = stepper.dense_output()
                n_dense += 1
            while eval_idx < len(t_eval) and direction * (t_eval[eval_idx] - seg_end_t) <= 0.0:
                te = t_eval[eval_idx]
                sample_t.append(float(te))
                sample_y.append(np.array(dense(te)))
                eval_idx += 1

        if cut is not None:
            status = f"event:{cut.kind}"
            break

    ts = np.array(sample_t)
    ys = np.array(sample_y)
    stages = _STAGES[config.method]
    extra = 3 * n_dense if config.method == "dop853" else 0
    attempts = max(n_steps, (stepper.nfev - 1 - extra) // stages)
    diag = _diagnostics(rhs, ys, n_steps, attempts - n_steps, stepper.nfev)
    return Trajectory(params, ts, ys, events, diag, status=status)


def _diagnostics(rhs, ys: np.ndarray, n_steps: int, n_rejected: int, nfev: int) -> Diagnostics:
    max_res = None
    max_drift = None
    if isinstance(rhs, BlochSystem) and len(ys) and ys.shape[1] == 5:
        max_res = float(np.max(np.abs(rhs.residual_samples(ys))))
        n = rhs.params.n_particle
        norms = np.linalg.norm(ys[:, 2:5], axis=1)
        max_drift = float(np.max(np.abs(norms - n) / n))
    return Diagnostics(
        n_steps=n_steps,
        n_rejected=n_rejected,
        n_rhs_evals=nfev,
        max_constraint_residual=max_res,
        max_norm_drift=max_drift,
    )
