"""Trajectory-level checks: energy conditions, monotone-arc and concavity
invariants, time-reflection symmetry, scaling-law fits, and an
amplitude-level differential oracle.

The condensate stress tensor is diagonal; writing T00 for the energy
density and Trr for the radial pressure component, the pointwise
conditions are

    weak      T00 >= max(0, Trr)
    dominant  T00 >= |Trr|
    strong    T00 >= max(3 Trr, Trr)

Samples within margin * |T00| of an inequality boundary are flagged
marginal rather than failed, because exact-boundary states arise
analytically.  Dominant implies weak at any margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .integrate import (
    Event,
    IntegratorConfig,
    Trajectory,
    extremum_event,
    integrate,
)
from .model import (
    BlochSystem,
    ModelParams,
    SpinorState,
    energy_momentum_arrays,
    exact_system,
    microscopic_system,
    rescaled_system,
    spinor_system,
    spinor_to_w,
)

EC_MARGIN_DEFAULT = 1e-12


class InvariantViolation(RuntimeError):
    """A property that holds for the continuous flow failed numerically."""


class EnergyFlags(NamedTuple):
    weak: np.ndarray | bool
    dominant: np.ndarray | bool
    strong: np.ndarray | bool
    marginal: np.ndarray | bool


def energy_conditions(t00, trr, margin: float = EC_MARGIN_DEFAULT) -> EnergyFlags:
    """Pointwise energy-condition flags for density t00 and pressure trr.

    Accepts scalars or equal-shape arrays.  A condition still counts as
    holding when its inequality fails by less than margin * |t00|; any
    sample that close to a boundary also sets the marginal flag.
    """
    scalar = np.ndim(t00) == 0 and np.ndim(trr) == 0
    t00 = np.atleast_1d(np.asarray(t00, dtype=float))
    trr = np.atleast_1d(np.asarray(trr, dtype=float))
    slack = margin * np.abs(t00)
    gaps = (
        t00 - np.maximum(0.0, trr),
        t00 - np.abs(trr),
        t00 - np.maximum(3.0 * trr, trr),
    )
    weak, dominant, strong = (g >= -slack for g in gaps)
    marginal = np.zeros(t00.shape, dtype=bool)
    for g in gaps:
        marginal |= np.abs(g) <= slack
    if scalar:
        return EnergyFlags(
            bool(weak[0]), bool(dominant[0]), bool(strong[0]), bool(marginal[0])
        )
    return EnergyFlags(weak, dominant, strong, marginal)


@dataclass(frozen=True)
class EventEnergyRow:
    """Energy-condition summary at one located event.

    ok means the row satisfies what the event kind requires: a classified
    minimum must violate the strong condition (an expansion turnaround with
    strong held would contradict the acceleration law); other kinds carry
    no requirement.
    """

    kind: str
    t: float
    r: float
    t00: float
    trr: float
    weak: bool
    dominant: bool
    strong: bool
    marginal: bool
    ok: bool


@dataclass(frozen=True)
class EnergyReport:
    t: np.ndarray
    t00: np.ndarray
    trr: np.ndarray
    weak: np.ndarray
    dominant: np.ndarray
    strong: np.ndarray
    marginal: np.ndarray
    event_rows: tuple[EventEnergyRow, ...]


def _event_row(params: ModelParams, ev: Event, margin: float) -> EventEnergyRow:
    state = ev.state
    if state is None:
        raise ValueError(f"event at t={ev.t} carries no model state")
    t00, trr = energy_momentum_arrays(
        params, np.array([state.r]), np.array([state.w[0]]), np.array([state.w[2]])
    )
    flags = energy_conditions(float(t00[0]), float(trr[0]), margin)
    ok = (not flags.strong) if ev.kind == "extremum_min" else True
    return EventEnergyRow(
        kind=ev.kind,
        t=ev.t,
        r=state.r,
        t00=float(t00[0]),
        trr=float(trr[0]),
        weak=flags.weak,
        dominant=flags.dominant,
        strong=flags.strong,
        marginal=flags.marginal,
        ok=ok,
    )


def energy_report(
    params: ModelParams, trajectory: Trajectory, margin: float = EC_MARGIN_DEFAULT
) -> EnergyReport:
    """Per-sample condition flags plus summary rows at minima and maxima."""
    t00, trr = energy_momentum_arrays(
        params, trajectory.r, trajectory.w[:, 0], trajectory.w[:, 2]
    )
    flags = energy_conditions(t00, trr, margin)
    rows = tuple(
        _event_row(params, ev, margin)
        for ev in trajectory.events_of_kind("extremum_min", "extremum_max")
    )
    return EnergyReport(
        t=trajectory.t,
        t00=t00,
        trr=trr,
        weak=flags.weak,
        dominant=flags.dominant,
        strong=flags.strong,
        marginal=flags.marginal,
        event_rows=rows,
    )


def check_bounce_energy(
    params: ModelParams, trajectory: Trajectory, margin: float = EC_MARGIN_DEFAULT
) -> tuple[EventEnergyRow, ...]:
    """Energy-condition rows at every classified minimum of the trajectory.

    Each row's ok field records whether the strong condition is violated
    there, as it must be; a failing row is returned, not raised, so a scan
    over many trajectories can collect failures.
    """
    bounces = trajectory.events_of_kind("extremum_min")
    if not bounces:
        raise ValueError("trajectory has no classified minimum events")
    return tuple(_event_row(params, ev, margin) for ev in bounces)


def ec_regime_mask(
    params: ModelParams, trajectory: Trajectory, kappa: float = 0.2
) -> np.ndarray:
    """Samples in the large-radius window w1 <= -kappa, R >= 2 N R_qu / kappa.

    All three energy conditions provably hold there; kappa is a run-level
    knob in (0, 1).
    """
    if not 0.0 < kappa < 1.0:
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
    return (trajectory.w[:, 0] <= -kappa) & (
        trajectory.r >= 2.0 * params.n_particle * params.r_qu / kappa
    )


def monotone_arcs(trajectory: Trajectory) -> list[tuple[float, float]]:
    """Maximal sample windows [t0, t1] on which Rdot keeps one strict sign."""
    t = trajectory.t
    s = np.sign(trajectory.rdot)
    arcs: list[tuple[float, float]] = []
    start: int | None = None
    prev = 0.0
    for i, si in enumerate(s):
        if si != 0.0 and si == prev:
            continue
        if start is not None and i - 1 > start:
            arcs.append((float(t[start]), float(t[i - 1])))
        start = i if si != 0.0 else None
        prev = si
    if start is not None and len(s) - 1 > start:
        arcs.append((float(t[start]), float(t[-1])))
    return arcs


def check_arcsin_bound(
    params: ModelParams,
    trajectory: Trajectory,
    t0: float,
    t1: float,
    tol: float = 1e-8,
) -> float:
    """Margin of the turning-angle bound over one monotone window.

    On windows where Rdot does not change sign,

        |asin(w1(t1)/N) - asin(w1(t0)/N)|
            <= |atan(R(t1)/R_qu) - atan(R(t0)/R_qu)|

    with N = |w|.  Evaluates at the sample times nearest inside [t0, t1]
    and returns lhs - rhs (nonpositive up to integration error; equality
    when w2 stays zero).  Raises ValueError when Rdot changes sign inside
    the window and InvariantViolation when the margin exceeds tol.
    """
    if t1 < t0:
        raise ValueError(f"t1 must be >= t0, got [{t0}, {t1}]")
    t = trajectory.t
    i0 = int(np.searchsorted(t, t0, side="left"))
    i1 = int(np.searchsorted(t, t1, side="right")) - 1
    if i0 >= len(t) or i1 < 0 or i1 < i0:
        raise ValueError(f"window [{t0}, {t1}] contains no samples")
    if i1 == i0:
        return 0.0
    signs = np.sign(trajectory.rdot[i0 : i1 + 1])
    signs = signs[signs != 0.0]
    if signs.size and signs.max() > 0.0 > signs.min():
        raise ValueError(f"Rdot changes sign inside [{t0}, {t1}]")
    n = float(np.linalg.norm(trajectory.w[i0]))
    w1r = np.clip(trajectory.w[[i0, i1], 0] / n, -1.0, 1.0)
    lhs = abs(math.asin(w1r[1]) - math.asin(w1r[0]))
    rhs = abs(
        math.atan2(trajectory.r[i1], params.r_qu)
        - math.atan2(trajectory.r[i0], params.r_qu)
    )
    result = lhs - rhs
    if result > tol:
        raise InvariantViolation(
            f"turning-angle bound violated on [{t0}, {t1}]: margin {result:.3e}"
        )
    return result


def check_concavity(
    params: ModelParams, trajectory: Trajectory, margin: float = EC_MARGIN_DEFAULT
) -> int:
    """Count samples with R^2 > lambda N where d^2(R^{3/2})/dt^2 > 0.

    The second derivative is evaluated analytically from the state through
    the unscaled acceleration law, never by differencing samples: up to the
    positive factor (3/4) R^{-1/2} it equals Rdot^2 + 2 R Rddot, which on
    shell reduces to lambda v1 / R^2 - k.  For k = 1 that is negative
    whenever R^2 > lambda N, so the count must be zero there.
    """
    lam, m = params.lam, params.m
    r = trajectory.r
    rdot = trajectory.rdot
    w1 = trajectory.w[:, 0]
    w3 = trajectory.w[:, 2]
    root = np.sqrt(lam * lam + m * m * r * r)
    v3 = (lam * w3 - m * r * w1) / root
    q = -rdot * rdot - 2.0 * float(params.k) + (m / r) * v3
    scale = rdot * rdot + 2.0 + (m / r) * params.n_particle
    eligible = r * r > lam * params.n_particle
    return int(np.count_nonzero(eligible & (q > margin * scale)))


def check_symmetry(
    params: ModelParams,
    r_init: float,
    w2_0: float,
    w3_0: float,
    horizon: float,
    system: BlochSystem | None = None,
    config: IntegratorConfig | None = None,
    n_samples: int = 256,
) -> float:
    """Residual of time-reflection symmetry through a rest start.

    Starts at R = r_init with Rdot = 0 and w1 fixed by the constraint,
    integrates over [0, horizon] and [0, -horizon] on mirrored grids, and
    returns the largest |R(t) - R(-t)| + max-abs(w(t) - P w(-t)) where P
    flips the second Bloch component.  The reflection is exact only for
    w2_0 = 0; nonzero w2_0 is accepted so the hypothesis can be probed.
    """
    if horizon < 0.0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    if system is None:
        system = microscopic_system(params)
    lam, m = params.lam, params.m
    w1_0 = (
        -system.kappa_eff
        * r_init
        * r_init
        / math.sqrt(lam * lam + m * m * r_init * r_init)
    )
    y0 = np.array([r_init, 0.0, w1_0, w2_0, w3_0])
    grid = np.linspace(0.0, horizon, n_samples)
    fwd = integrate(system, (0.0, y0), horizon, config=config, t_eval=grid)
    bwd = integrate(system, (0.0, y0), -horizon, config=config, t_eval=-grid)
    if len(fwd.t) != len(grid) or len(bwd.t) != len(grid):
        raise ValueError(
            f"horizon exceeds the trajectory span (forward {fwd.status}, "
            f"backward {bwd.status})"
        )
    dr = np.abs(fwd.r - bwd.r)
    dw = fwd.w - bwd.w
    dw[:, 1] = fwd.w[:, 1] + bwd.w[:, 1]
    return float(np.max(dr + np.max(np.abs(dw), axis=1)))


@dataclass(frozen=True)
class ScalingRow:
    epsilon: float
    t_max: float | None
    r_max: float | None
    status: str


@dataclass(frozen=True)
class ScalingReport:
    rows: tuple[ScalingRow, ...]
    slope_r: float
    slope_t: float

    def excluded(self) -> tuple[ScalingRow, ...]:
        return tuple(row for row in self.rows if row.t_max is None)


def check_scaling_laws(
    params: ModelParams,
    r_init: float,
    w3_0: float,
    eps_list: Sequence[float],
    config: IntegratorConfig | None = None,
    t_end: float = 1e9,
) -> ScalingReport:
    """Fit how the first maximum grows as the rescaling strength shrinks.

    For each epsilon the rescaled flow starts at rest at r_init (w1 from
    the constraint, w2 = 0) and runs to its first classified maximum,
    recording (T_max, R_max).  Log-log fits over the entries that reach a
    maximum give the slopes (-3 and -2 in the small-epsilon limit); entries
    that crunch or never turn over are kept in rows with their status and
    excluded from the fit.
    """
    if len(eps_list) < 2:
        raise ValueError("need at least two epsilon values to fit a slope")
    rows: list[ScalingRow] = []
    lam, m = params.lam, params.m
    for eps in eps_list:
        system = rescaled_system(params, eps)
        w1_0 = (
            -system.kappa_eff
            * r_init
            * r_init
            / math.sqrt(lam * lam + m * m * r_init * r_init)
        )
        y0 = np.array([r_init, 0.0, w1_0, 0.0, w3_0])
        traj = integrate(
            system,
            (0.0, y0),
            t_end,
            config=config,
            event_specs=[extremum_event(direction=-1, terminal=True)],
        )
        maxima = traj.events_of_kind("extremum_max")
        if traj.status == "event:extremum_max" and maxima:
            ev = maxima[-1]
            rows.append(ScalingRow(float(eps), ev.t, float(ev.y[0]), traj.status))
        else:
            rows.append(ScalingRow(float(eps), None, None, traj.status))
    good = [row for row in rows if row.t_max is not None]
    if len(good) < 2:
        raise InvariantViolation(
            "fewer than two epsilon entries reached a maximum; statuses: "
            + ", ".join(f"{row.epsilon}: {row.status}" for row in rows)
        )
    log_eps = np.log([row.epsilon for row in good])
    slope_r = float(np.polyfit(log_eps, np.log([row.r_max for row in good]), 1)[0])
    slope_t = float(np.polyfit(log_eps, np.log([row.t_max for row in good]), 1)[0])
    return ScalingReport(rows=tuple(rows), slope_r=slope_r, slope_t=slope_t)


@dataclass(frozen=True)
class OracleReport:
    divergence: float
    bloch_norm_drift: float
    spinor_norm_drift: float


def differential_oracle(
    params: ModelParams,
    initial: SpinorState,
    horizon: float,
    config: IntegratorConfig | None = None,
    n_samples: int = 512,
) -> OracleReport:
    """Integrate the amplitude-level and Bloch-level forms side by side.

    Both runs start from the same physical state (the Bloch start is the
    mapped amplitude start) and are sampled on a shared grid.  divergence
    is the largest pointwise difference in (R, w) after mapping the
    amplitudes, normalized by the run scale max(max R, |w|); the drifts
    are the relative departures of |alpha|^2 + |beta|^2 and |w| from their
    initial values.
    """
    t0 = initial.t
    grid = np.linspace(t0, t0 + horizon, n_samples)
    straj = integrate(
        spinor_system(params),
        (t0, initial.as_array()),
        t0 + horizon,
        config=config,
        t_eval=grid,
    )
    w0 = spinor_to_w(params, initial.r, initial.alpha, initial.beta)
    y0 = np.array([initial.r, initial.rdot, w0[0], w0[1], w0[2]])
    btraj = integrate(
        exact_system(params), (t0, y0), t0 + horizon, config=config, t_eval=grid
    )
    if len(straj.t) != len(grid) or len(btraj.t) != len(grid):
        raise ValueError(
            f"horizon exceeds the trajectory span (amplitude {straj.status}, "
            f"Bloch {btraj.status})"
        )
    r_s = straj.y[:, 0]
    a = straj.y[:, 2] + 1j * straj.y[:, 3]
    b = straj.y[:, 4] + 1j * straj.y[:, 5]
    ab = a * np.conjugate(b)
    v1 = 2.0 * ab.real
    v2 = 2.0 * ab.imag
    v3 = np.abs(a) ** 2 - np.abs(b) ** 2
    chi = np.arctan2(params.m * r_s, params.lam)
    c, s = np.cos(chi), np.sin(chi)
    w_s = np.stack([c * v1 - s * v3, v2, s * v1 + c * v3], axis=1)

    n0 = float(np.linalg.norm(w0))
    scale = max(float(np.max(np.abs(btraj.r))), n0)
    dr = np.abs(r_s - btraj.r)
    dw = np.max(np.abs(w_s - btraj.w), axis=1)
    divergence = float(np.max(np.maximum(dr, dw)) / scale)
    spinor_drift = float(np.max(np.abs((np.abs(a) ** 2 + np.abs(b) ** 2) - n0)) / n0)
    bloch_norms = np.linalg.norm(btraj.w, axis=1)
    bloch_drift = float(np.max(np.abs(bloch_norms - n0)) / n0)
    return OracleReport(
        divergence=divergence,
        bloch_norm_drift=bloch_drift,
        spinor_norm_drift=spinor_drift,
    )


@dataclass(frozen=True)
class InvariantReport:
    """One-trajectory roll-up of the flow invariants.

    arcsin_margin is the worst (largest) turning-angle margin over the
    maximal monotone arcs; symmetry_residual and scaling_exponents require
    extra runs and are attached by the caller when available.
    """

    max_norm_drift: float
    max_constraint_residual: float
    arcsin_margin: float
    concavity_violations: int
    symmetry_residual: float | None = None
    scaling_exponents: tuple[float, float] | None = None


def invariant_report(
    params: ModelParams,
    trajectory: Trajectory,
    system: BlochSystem | None = None,
    symmetry_residual: float | None = None,
    scaling_exponents: tuple[float, float] | None = None,
) -> InvariantReport:
    """Recompute the per-trajectory invariants from the samples alone."""
    if system is None:
        system = exact_system(params)
    norms = np.linalg.norm(trajectory.w, axis=1)
    n = params.n_particle
    drift = float(np.max(np.abs(norms - n)) / n)
    residual = float(np.max(np.abs(system.residual_samples(trajectory.y))))
    margins = [
        check_arcsin_bound(params, trajectory, t0, t1, tol=math.inf)
        for t0, t1 in monotone_arcs(trajectory)
    ]
    return InvariantReport(
        max_norm_drift=drift,
        max_constraint_residual=residual,
        arcsin_margin=max(margins) if margins else 0.0,
        concavity_violations=check_concavity(params, trajectory),
        symmetry_residual=symmetry_residual,
        scaling_exponents=scaling_exponents,
    )
