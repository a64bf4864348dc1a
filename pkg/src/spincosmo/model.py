"""Core model: parameters, state representations, and right-hand sides.

PHYSICS SCOPE
    Closed, flat, or open FRW universe (curvature k = +1, 0, -1) sourced by a
    homogeneous condensate of spin-1/2 particles filling one momentum shell.
    The matter state reduces to a single two-component amplitude (alpha, beta),
    equivalently a Bloch 3-vector w with |w| = N = lambda^2 - 1/4.  The coupled
    system in Bloch form is

        dw/dt  = d ^ w,
        d      = (2/R) sqrt(lambda^2 + m^2 R^2) e1
                 - [lambda m Rdot / (lambda^2 + m^2 R^2)] e2,
        Rdot^2 + k = -(1/R^2) sqrt(lambda^2 + m^2 R^2) w1,

    where R(t) is the scale function.  The constraint is propagated exactly by
    the second-order form

        2 R Rddot = -2 (Rdot^2 + kappa_eff) + (m/R) v3,
        v3 = (lambda w3 - m R w1) / sqrt(lambda^2 + m^2 R^2),

    which is regular at turning points Rdot = 0; kappa_eff is k for the exact
    system, epsilon^2 for the rescaled family, and 0 for the microscopic limit.
    All three share one vector field with scalings (e1_scale, kappa_eff) =
    (1, k), (epsilon, epsilon^2), (0, 0).

UNITS AND CONVENTIONS
    Geometric units, c = 1; the gravitational coupling is fixed to 3/(8 pi) so
    that the Einstein equations take the dimensionless form above.  lambda is
    the (dimensionless) momentum eigenvalue, m the rest mass (inverse length),
    t and R lengths.  The rotated frame is reached by the rotation U about e2
    with cos(chi) = lambda / sqrt(lambda^2 + m^2 R^2) and
    sin(chi) = m R / sqrt(lambda^2 + m^2 R^2); U maps the precession axis of
    the unrotated Bloch vector onto e1.  The rotation sense is pinned by
    requiring w1 < 0 at classical turning points of a closed universe.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import bisect

KAPPA_CONVENTION = 3.0 / (8.0 * math.pi)

# Radii at or below this multiple of R_qu = lambda/m are treated as a crunch;
# the right-hand sides are singular at R = 0.
R_FLOOR_FACTOR = 1e-9


def _validate_half_integer(lam: float) -> bool:
    two_lam = 2.0 * lam
    return abs(two_lam - round(two_lam)) < 1e-12 and round(two_lam) % 2 != 0


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters (lambda, m, k) with the fixed coupling convention."""

    lam: float
    m: float
    k: int
    kappa_convention: float = KAPPA_CONVENTION

    def __post_init__(self) -> None:
        if not self.m > 0.0:
            raise ValueError(f"mass must be positive, got m={self.m}")
        if self.k not in (-1, 0, 1):
            raise ValueError(f"curvature tag must be +1, 0 or -1, got k={self.k}")
        if self.k == 1:
            # Closed universe: momentum eigenvalues are odd half-integers.
            if abs(self.lam) < 1.5 or not _validate_half_integer(self.lam):
                raise ValueError(
                    f"for k=+1, lambda must be an odd half-integer with "
                    f"|lambda| >= 3/2, got {self.lam}"
                )
        elif self.lam == 0.0:
            raise ValueError("lambda must be nonzero")
        if self.kappa_convention != KAPPA_CONVENTION:
            raise ValueError("the coupling convention 3/(8 pi) is fixed")

    @property
    def n_particle(self) -> float:
        """Bloch norm N = lambda^2 - 1/4 (particle number of the shell)."""
        return self.lam * self.lam - 0.25

    @property
    def r_qu(self) -> float:
        """Quantum radius lambda/m below which radiation-like behavior sets in."""
        return self.lam / self.m

    @property
    def r_floor(self) -> float:
        return R_FLOOR_FACTOR * abs(self.r_qu)


@dataclass(frozen=True)
class DynamicState:
    """Phase-space point (t, R, Rdot, w) in Bloch form."""

    t: float
    r: float
    rdot: float
    w: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))
        if self.w.shape != (3,):
            raise ValueError(f"w must be a 3-vector, got shape {self.w.shape}")

    def as_array(self) -> np.ndarray:
        """Flat integration vector (R, Rdot, w1, w2, w3)."""
        return np.array([self.r, self.rdot, self.w[0], self.w[1], self.w[2]])

    @staticmethod
    def from_array(t: float, y: np.ndarray) -> "DynamicState":
        return DynamicState(t=t, r=y[0], rdot=y[1], w=np.array(y[2:5]))


@dataclass(frozen=True)
class SpinorState:
    """Equivalent two-component representation (t, R, Rdot, alpha, beta)."""

    t: float
    r: float
    rdot: float
    alpha: complex
    beta: complex

    def norm(self) -> float:
        return abs(self.alpha) ** 2 + abs(self.beta) ** 2

    def as_array(self) -> np.ndarray:
        """Flat vector (R, Rdot, Re a, Im a, Re b, Im b)."""
        return np.array(
            [
                self.r,
                self.rdot,
                self.alpha.real,
                self.alpha.imag,
                self.beta.real,
                self.beta.imag,
            ]
        )

    @staticmethod
    def from_array(t: float, y: np.ndarray) -> "SpinorState":
        return SpinorState(
            t=t, r=y[0], rdot=y[1], alpha=complex(y[2], y[3]), beta=complex(y[4], y[5])
        )


@dataclass(frozen=True)
class DerivedScales:
    """Characteristic radii and Bloch amplitudes of a closed-universe run."""

    r_qu: float
    r_tilt: float
    r_max: float
    w1_max: float
    n_particle: float
    rho: float
    regime_ok: bool


@dataclass(frozen=True)
class RescaleFactor:
    epsilon: float

    def __post_init__(self) -> None:
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def rotation_angle(params: ModelParams, r: float) -> float:
    """Angle chi of the e2-rotation aligning the precession axis with e1.

    cos(chi) = lambda/sqrt(lambda^2 + m^2 R^2), sin(chi) = mR/sqrt(...);
    chi = atan2(mR, lambda).  R = 0 is allowed as a limit (chi = 0).
    """
    if r < 0.0:
        raise ValueError(f"R must be nonnegative, got {r}")
    return math.atan2(params.m * r, params.lam)


def tilt_rotation(params: ModelParams, r: float) -> np.ndarray:
    """Rotation matrix U(chi) about e2; w = U v, v the unrotated Bloch vector."""
    chi = rotation_angle(params, r)
    c, s = math.cos(chi), math.sin(chi)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def spinor_to_w(params: ModelParams, r: float, alpha: complex, beta: complex) -> np.ndarray:
    """Map amplitudes to the rotated Bloch vector w = U(chi) v.

    v = (2 Re(a conj(b)), 2 Im(a conj(b)), |a|^2 - |b|^2); |w| = |a|^2 + |b|^2.
    The orientation of v2 is what makes the amplitude flow precess about
    +d and not -d.
    """
    ab = alpha * np.conjugate(beta)
    v = np.array([2.0 * ab.real, 2.0 * ab.imag, abs(alpha) ** 2 - abs(beta) ** 2])
    return tilt_rotation(params, r) @ v


def w_to_spinor(params: ModelParams, r: float, w: np.ndarray) -> tuple[complex, complex]:
    """Inverse of spinor_to_w with the gauge alpha real >= 0.

    When alpha vanishes the global phase is unconstrained; the gauge then
    falls back to beta real >= 0.
    """
    w = np.asarray(w, dtype=float)
    norm = float(np.linalg.norm(w))
    if not norm > 0.0:
        raise ValueError("w must be a nonzero vector")
    v = tilt_rotation(params, r).T @ w
    a_sq = 0.5 * (norm + v[2])
    if a_sq <= 0.0:
        # Degenerate gauge: v = (0, 0, -norm), so alpha = 0 and only |beta| is
        # fixed; choose beta real nonnegative.
        return 0.0 + 0.0j, complex(math.sqrt(norm), 0.0)
    alpha = complex(math.sqrt(a_sq), 0.0)
    # alpha conj(beta) = (v1 + i v2) / 2 with alpha real
    beta = complex(v[0], -v[1]) / (2.0 * alpha)
    return alpha, beta


def spinor_rhs(
    params: ModelParams, r: float, alpha: complex, beta: complex
) -> tuple[complex, complex]:
    """Amplitude evolution i d/dt (a, b) = [[m, -lambda/R], [-lambda/R, -m]] (a, b)."""
    if r <= 0.0:
        raise ValueError(f"R must be positive, got {r}")
    coupling = params.lam / r
    dalpha = -1j * (params.m * alpha - coupling * beta)
    dbeta = -1j * (-coupling * alpha - params.m * beta)
    return dalpha, dbeta


def d_vector(params: ModelParams, state: DynamicState) -> np.ndarray:
    """Instantaneous Bloch rotation axis d (the vector w precesses about)."""
    if state.r <= 0.0:
        raise ValueError(f"R must be positive, got {state.r}")
    lam, m = params.lam, params.m
    s_sq = lam * lam + m * m * state.r * state.r
    d1 = 2.0 * math.sqrt(s_sq) / state.r
    d2 = -lam * m * state.rdot / s_sq
    return np.array([d1, d2, 0.0])


def constraint_residual(params: ModelParams, state: DynamicState) -> float:
    """Residual of the first-order constraint Rdot^2 + k = -(1/R^2) sqrt(...) w1."""
    lam, m = params.lam, params.m
    r = state.r
    root = math.sqrt(lam * lam + m * m * r * r)
    return state.rdot**2 + params.k + root * state.w[0] / (r * r)


class BlochSystem:
    """One member of the shared right-hand-side family, bound to parameters.

    Callable as f(t, y) on the flat vector y = (R, Rdot, w1, w2, w3), so it
    plugs directly into the integrator.  e1_scale and kappa_eff select the
    exact system (1, k), the rescaled family (eps, eps^2), or the microscopic
    limit (0, 0).
    """

    ndim = 5

    def __init__(self, params: ModelParams, e1_scale: float, kappa_eff: float, name: str):
        self.params = params
        self.e1_scale = e1_scale
        self.kappa_eff = kappa_eff
        self.name = name

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        lam, m = self.params.lam, self.params.m
        r, rdot, w1, w2, w3 = y
        if r <= 0.0:
            # Trial stages of a rejected step can overshoot past R = 0 during
            # a crunch; an infinite slope shrinks the step instead of
            # aborting the run at a state that is never accepted.
            return np.array([rdot, math.inf, 0.0, 0.0, 0.0])
        s_sq = lam * lam + m * m * r * r
        root = math.sqrt(s_sq)
        d1 = self.e1_scale * 2.0 * root / r
        d2 = -lam * m * rdot / s_sq
        v3 = (lam * w3 - m * r * w1) / root
        rddot = (-2.0 * (rdot * rdot + self.kappa_eff) + (m / r) * v3) / (2.0 * r)
        # (d1, d2, 0) ^ w
        return np.array(
            [rdot, rddot, d2 * w3, -d1 * w3, d1 * w2 - d2 * w1]
        )

    def rddot(self, y: np.ndarray) -> float:
        return float(self(0.0, y)[1])

    def residual(self, y: np.ndarray) -> float:
        """First-order constraint residual of this family member."""
        lam, m = self.params.lam, self.params.m
        r = y[0]
        root = math.sqrt(lam * lam + m * m * r * r)
        return float(y[1] ** 2 + self.kappa_eff + root * y[2] / (r * r))

    def residual_samples(self, y: np.ndarray) -> np.ndarray:
        """Vectorized residual over samples of shape (n, 5)."""
        lam, m = self.params.lam, self.params.m
        r = y[:, 0]
        root = np.sqrt(lam * lam + m * m * r * r)
        return y[:, 1] ** 2 + self.kappa_eff + root * y[:, 2] / (r * r)


def exact_system(params: ModelParams) -> BlochSystem:
    return BlochSystem(params, e1_scale=1.0, kappa_eff=float(params.k), name="exact")


def rescaled_system(params: ModelParams, epsilon: float) -> BlochSystem:
    eps = RescaleFactor(epsilon).epsilon
    return BlochSystem(params, e1_scale=eps, kappa_eff=eps * eps, name="rescaled")


def microscopic_system(params: ModelParams) -> BlochSystem:
    return BlochSystem(params, e1_scale=0.0, kappa_eff=0.0, name="microscopic")


def _as_state_derivative(
    system: BlochSystem, state: DynamicState
) -> tuple[float, float, np.ndarray]:
    dy = system(state.t, state.as_array())
    return float(dy[0]), float(dy[1]), dy[2:5].copy()


def exact_rhs(params: ModelParams, state: DynamicState) -> tuple[float, float, np.ndarray]:
    """(dR/dt, dRdot/dt, dw/dt) for the exact system with curvature k."""
    return _as_state_derivative(exact_system(params), state)


def rescaled_rhs(
    params: ModelParams, epsilon: float, state: DynamicState
) -> tuple[float, float, np.ndarray]:
    """(dR/dt, dRdot/dt, dw/dt) for the rescaled family member epsilon."""
    return _as_state_derivative(rescaled_system(params, epsilon), state)


def microscopic_rhs(params: ModelParams, state: DynamicState) -> tuple[float, float, np.ndarray]:
    """(dR/dt, dRdot/dt, dw/dt) in the microscopic limit (w2 is conserved)."""
    return _as_state_derivative(microscopic_system(params), state)


def spinor_system(params: ModelParams) -> Callable[[float, np.ndarray], np.ndarray]:
    """Amplitude-level vector field on y = (R, Rdot, Re a, Im a, Re b, Im b).

    The scale function obeys the same second-order equation as the Bloch form
    with v3 = |a|^2 - |b|^2 read off directly from the amplitudes.
    """
    lam, m, k = params.lam, params.m, float(params.k)

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        r, rdot, ar, ai, br, bi = y
        if r <= 0.0:
            # Same rejected-trial-stage guard as the Bloch family
            return np.array([rdot, math.inf, 0.0, 0.0, 0.0, 0.0])
        coupling = lam / r
        # i y' = H y with H = [[m, -coupling], [-coupling, -m]]
        dar = m * ai - coupling * bi
        dai = -(m * ar - coupling * br)
        dbr = -coupling * ai - m * bi
        dbi = coupling * ar + m * br
        v3 = (ar * ar + ai * ai) - (br * br + bi * bi)
        rddot = (-2.0 * (rdot * rdot + k) + (m / r) * v3) / (2.0 * r)
        return np.array([rdot, rddot, dar, dai, dbr, dbi])

    return rhs


def on_shell_rdot(
    params: ModelParams, r: float, w1: float, kappa_eff: float | None = None, branch: int = -1
) -> float:
    """Seed Rdot from the first-order constraint; branch -1 contracts.

    Raises when the constraint admits no real Rdot (for the microscopic limit
    this happens exactly when w1 > 0).
    """
    if kappa_eff is None:
        kappa_eff = float(params.k)
    lam, m = params.lam, params.m
    root = math.sqrt(lam * lam + m * m * r * r)
    rdot_sq = -root * w1 / (r * r) - kappa_eff
    if rdot_sq < 0.0:
        raise ValueError(
            f"constraint admits no real Rdot at R={r}, w1={w1}, kappa_eff={kappa_eff}"
        )
    return branch * math.sqrt(rdot_sq)


def rescale_solution(traj, epsilon: float, direction: str = "forward"):
    """Map a rescaled-family trajectory to the original variables or back.

    forward:  (t, R, Rdot, w) -> (eps^2 t, eps R, Rdot/eps, w) with m -> m/eps;
    backward: the inverse.  The Bloch norm is untouched; constraint residuals
    scale by 1/eps^2 (forward).  Works on any trajectory dataclass exposing
    params, t, y, events and diagnostics.
    """
    eps = RescaleFactor(epsilon).epsilon
    if direction == "forward":
        t_fac, r_fac, m_fac = eps * eps, eps, 1.0 / eps
    elif direction == "backward":
        t_fac, r_fac, m_fac = 1.0 / eps**2, 1.0 / eps, eps
    else:
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    rdot_fac = r_fac / t_fac

    params = traj.params
    new_params = (
        dataclasses.replace(params, m=params.m * m_fac) if params is not None else None
    )
    y = np.array(traj.y)
    y[:, 0] *= r_fac
    y[:, 1] *= rdot_fac

    def map_event(ev):
        state = ev.state
        new_state = DynamicState(
            t=state.t * t_fac, r=state.r * r_fac, rdot=state.rdot * rdot_fac, w=state.w
        )
        return dataclasses.replace(ev, t=ev.t * t_fac, state=new_state)

    new_events = [map_event(ev) for ev in traj.events]
    diag = traj.diagnostics
    if diag is not None and diag.max_constraint_residual is not None:
        diag = dataclasses.replace(
            diag, max_constraint_residual=diag.max_constraint_residual / t_fac
        )
    return dataclasses.replace(
        traj, params=new_params, t=np.array(traj.t) * t_fac, y=y, events=new_events,
        diagnostics=diag,
    )


def _tilt_balance(params: ModelParams, w1_max: float, r: float) -> float:
    """Ratio of precession-axis components whose unit crossing defines R_tilt."""
    lam, m = params.lam, params.m
    s_sq = lam * lam + m * m * r * r
    return lam * lam * m * m * abs(w1_max) / (2.0 * s_sq**2.5) - 1.0


def derived_scales(
    params: ModelParams, r_max: float, approximate_w1: bool = False
) -> DerivedScales:
    """Characteristic scales of a run that turns at R = r_max.

    w1_max is the Bloch first component forced by Rdot = 0 at r_max in a
    closed universe; with approximate_w1 the large-R simplification
    w1_max = -r_max/m is used instead.  R_tilt is the radius where the two
    components of the precession axis balance, found by bracketed bisection
    (relative tolerance 1e-12); it exists only when the balance exceeds one
    as R -> 0.
    """
    if not r_max > 0.0:
        raise ValueError(f"r_max must be positive, got {r_max}")
    lam, m = params.lam, params.m
    if approximate_w1:
        w1_max = -r_max / m
    else:
        w1_max = -r_max * r_max / math.sqrt(lam * lam + m * m * r_max * r_max)
    n = params.n_particle
    if abs(w1_max) >= n:
        raise ValueError(
            f"|w1_max| = {abs(w1_max):.6g} >= N = {n:.6g}; r_max too large for "
            f"these parameters"
        )
    rho = math.sqrt(n * n - w1_max * w1_max)
    if _tilt_balance(params, w1_max, 0.0) <= 0.0:
        raise ValueError(
            "no tilt radius: lambda^2 m^2 |w1_max| / 2 <= lambda^5 (regime violated)"
        )
    lo = 1e-12 * params.r_qu
    if _tilt_balance(params, w1_max, r_max) >= 0.0:
        raise ValueError("no tilt radius below r_max")
    r_tilt = bisect(
        lambda r: _tilt_balance(params, w1_max, r), lo, r_max, xtol=1e-300, rtol=1e-12
    )
    regime_ok = (
        r_max >= 10.0 * max(r_tilt, params.r_qu) and m * r_max / lam**3 >= 1.0
    )
    return DerivedScales(
        r_qu=params.r_qu,
        r_tilt=float(r_tilt),
        r_max=r_max,
        w1_max=w1_max,
        n_particle=n,
        rho=rho,
        regime_ok=regime_ok,
    )


def turning_point_start(params: ModelParams, r_max: float, phi: float) -> np.ndarray:
    """Initial data at rest at R = r_max with transverse Bloch phase phi.

    Rdot = 0 on the constraint surface forces
    w1 = -k R^2 / sqrt(lam^2 + m^2 R^2) (zero for a flat universe, positive
    for an open one); the transverse components carry the remaining norm at
    angle phi in the (w2, w3) plane.
    """
    if not r_max > 0.0:
        raise ValueError(f"r_max must be positive, got {r_max}")
    lam, m = params.lam, params.m
    w1 = -params.k * r_max * r_max / math.sqrt(lam * lam + m * m * r_max * r_max)
    n = params.n_particle
    if abs(w1) >= n:
        raise ValueError(
            f"|w1| = {abs(w1):.6g} >= N = {n:.6g}; r_max too large for these "
            f"parameters"
        )
    rho = math.sqrt(n * n - w1 * w1)
    return np.array([r_max, 0.0, w1, rho * math.cos(phi), rho * math.sin(phi)])


def energy_momentum(params: ModelParams, state: DynamicState) -> tuple[float, float]:
    """Energy density T00 and radial pressure component Trr of the condensate.

    T00 = -(m/R^4) sqrt(R^2 + R_qu^2) w1;
    Trr = lambda^2 w1 / (3 m R^4 sqrt(R^2 + R_qu^2))
          + lambda w3 / (3 R^3 sqrt(R^2 + R_qu^2)).
    On shell with k = +1, T00 = (Rdot^2 + 1)/R^2 identically.
    """
    if state.r <= 0.0:
        raise ValueError(f"R must be positive, got {state.r}")
    t00, trr = energy_momentum_arrays(
        params, np.array([state.r]), np.array([state.w[0]]), np.array([state.w[2]])
    )
    return float(t00[0]), float(trr[0])


def energy_momentum_arrays(
    params: ModelParams, r: np.ndarray, w1: np.ndarray, w3: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized energy_momentum over sample arrays."""
    lam, m = params.lam, params.m
    r_qu = params.r_qu
    root = np.sqrt(r * r + r_qu * r_qu)
    t00 = -(m / r**4) * root * w1
    trr = (lam * lam / (3.0 * m * r**4)) * w1 / root + (lam / (3.0 * r**3)) * w3 / root
    return t00, trr
