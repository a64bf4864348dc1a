"""Bloch-vector dynamics of a spin-condensate cosmology.

Library layout:
    model     parameters, representations, right-hand sides, derived scales
    integrate adaptive embedded Runge-Kutta driver with located events
    approx    instantaneous-tilt approximation and closed-form references
    analysis  energy conditions, invariant checks, scaling laws, oracle
    periodic  shooting construction of time-periodic solutions
    config    run configuration parsing and validation
    output    deterministic CSV/JSON emission
    cli       command-line frontend
"""

from .analysis import (
    EnergyFlags,
    EnergyReport,
    InvariantReport,
    InvariantViolation,
    OracleReport,
    ScalingReport,
    check_arcsin_bound,
    check_bounce_energy,
    check_concavity,
    check_scaling_laws,
    check_symmetry,
    differential_oracle,
    energy_conditions,
    energy_report,
    invariant_report,
    monotone_arcs,
)
from .integrate import (
    Diagnostics,
    Event,
    EventSpec,
    IntegrationError,
    IntegratorConfig,
    Trajectory,
    classify_extremum,
    crunch_event,
    extremum_event,
    integrate,
    standard_events,
    tilt_crossing_event,
    w2_zero_event,
)
from .model import (
    DerivedScales,
    DynamicState,
    ModelParams,
    RescaleFactor,
    SpinorState,
    constraint_residual,
    d_vector,
    derived_scales,
    energy_momentum,
    exact_rhs,
    exact_system,
    microscopic_rhs,
    microscopic_system,
    on_shell_rdot,
    rescale_solution,
    rescaled_rhs,
    rescaled_system,
    rotation_angle,
    spinor_rhs,
    spinor_system,
    spinor_to_w,
    tilt_rotation,
    turning_point_start,
    w_to_spinor,
)
from .approx import (
    BounceProbability,
    EraISolution,
    EraIITrajectory,
    MicroscopicSolution,
    RegimeError,
    bounce_condition,
    bounce_prob_lower_bound,
    dust_reference,
    era1_solve,
    era2_solve,
    microscopic_solution,
    radiation_reference,
    theta_of_r,
)
from .periodic import (
    BracketError,
    PeriodicSolution,
    ShootingError,
    ShootingResult,
    StagnationError,
    find_periodic,
    rest_start,
    scan_for_bracket,
    shoot,
    verify_periodicity,
)
from .config import ConfigError, RunConfig, load_config, parse_config
from .output import (
    write_csv,
    write_diagnostics_json,
    write_events_json,
    write_json,
    write_trajectory_csv,
)

__version__ = "0.1.0"
