"""Command-line frontend.

Every subcommand takes one INI configuration file (see config.py for the
key set) and writes its results as deterministic CSV/JSON files into the
configured out_dir.  Exit codes: 0 success, 1 configuration error,
2 numerical failure, 3 search failure (no bracket or no admissible root).
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .analysis import InvariantViolation, energy_report
from .approx import (
    RegimeError,
    bounce_condition,
    bounce_prob_lower_bound,
    era1_solve,
    era2_solve,
)
from .config import ConfigError, RunConfig, load_config
from .integrate import IntegrationError, integrate, standard_events
from .model import (
    BlochSystem,
    derived_scales,
    exact_system,
    rescaled_system,
    turning_point_start,
)
from .output import (
    write_csv,
    write_diagnostics_json,
    write_events_json,
    write_json,
    write_trajectory_csv,
)
from .periodic import (
    BracketError,
    ShootingError,
    find_periodic,
    rest_start,
    scan_for_bracket,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_SEARCH = 3

GRID_SIZE_DEFAULT = 64
MC_SAMPLES_DEFAULT = 10_000
SCAN_RATIO_DEFAULT = 0.99
MAX_BRACKETS_DEFAULT = 8


def _worker_count() -> int:
    raw = os.environ.get("SPINCOSMO_THREADS", "")
    if raw:
        try:
            n = int(raw, 10)
        except ValueError as exc:
            raise ConfigError(
                f"SPINCOSMO_THREADS must be an integer, got {raw!r}"
            ) from exc
        if n < 1:
            raise ConfigError(f"SPINCOSMO_THREADS must be >= 1, got {n}")
        return n
    return min(4, os.cpu_count() or 1)


def _build_start(cfg: RunConfig) -> tuple[BlochSystem, np.ndarray]:
    if cfg.scenario == "max_start":
        cfg.require("r_max", "phi_max")
        system = exact_system(cfg.params)
        y0 = turning_point_start(cfg.params, cfg.r_max, cfg.phi_max)
    else:
        cfg.require("r_init", "w3_init", "epsilon")
        system = rescaled_system(cfg.params, cfg.epsilon)
        y0 = rest_start(cfg.params, cfg.epsilon, cfg.r_init, cfg.w2_init,
                        cfg.w3_init)
    return system, y0


def _optional_r_tilt(cfg: RunConfig) -> float | None:
    # The tilt radius only exists when the closed-universe turning data
    # admits one; runs outside that regime simply carry no tilt events.
    if cfg.scenario != "max_start":
        return None
    try:
        return derived_scales(cfg.params, cfg.r_max).r_tilt
    except ValueError:
        return None


def _simulate_trajectory(cfg: RunConfig):
    if cfg.t_end is None:
        raise ConfigError("this command requires key 't_end'")
    system, y0 = _build_start(cfg)
    specs = standard_events(system, r_tilt=_optional_r_tilt(cfg))
    trajectory = integrate(
        system, (0.0, y0), cfg.t_end, config=cfg.integrator, event_specs=specs
    )
    return system, trajectory


def cmd_simulate(cfg: RunConfig, args: argparse.Namespace) -> int:
    system, trajectory = _simulate_trajectory(cfg)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", cfg.params, trajectory, system)
    write_events_json(out / "events.json", trajectory.events)
    write_diagnostics_json(out / "diagnostics.json", trajectory)
    print(
        f"simulate: status={trajectory.status} samples={len(trajectory.t)} "
        f"events={len(trajectory.events)} out={out}"
    )
    return EXIT_OK


def cmd_scales(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.require("r_max")
    scales = derived_scales(cfg.params, cfg.r_max)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_json(cfg.out_dir / "scales.json", dataclasses.asdict(scales))
    print(
        f"scales: R_qu={scales.r_qu!r} R_tilt={scales.r_tilt!r} "
        f"w1_max={scales.w1_max!r} regime_ok={scales.regime_ok}"
    )
    return EXIT_OK


def cmd_approx(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.require("r_max", "phi_max")
    if cfg.t_end is None:
        raise ConfigError("approx requires key 't_end'")
    era1 = era1_solve(cfg.params, cfg.r_max, cfg.phi_max)
    era2 = era2_solve(cfg.params, era1, cfg.t_end, config=cfg.integrator)

    t1 = np.linspace(0.0, era1.t_tilt, 512)
    r1, rdot1 = era1.r_of_t(t1)
    w1 = era1.w_of_t(t1)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "era1.csv",
        ("t", "R", "Rdot", "w1", "w2", "w3"),
        np.column_stack([t1, r1, rdot1, w1]),
    )
    write_csv(
        out / "era2.csv",
        ("t", "R", "Rdot", "theta", "w2"),
        np.column_stack(
            [era2.t, era2.r, era2.rdot, era2.theta,
             np.full_like(era2.t, era2.w2)]
        ),
    )
    write_json(
        out / "approx.json",
        {
            "c": era1.c,
            "t_tilt": era1.t_tilt,
            "phi_max": era1.phi_max,
            "phi_tilt": era1.phi_tilt,
            "r_tilt": era1.scales.r_tilt,
            "r_qu": era1.scales.r_qu,
            "outcome": era2.outcome,
            "r_bounce": era2.r_bounce,
        },
    )
    print(f"approx: outcome={era2.outcome} r_bounce={era2.r_bounce!r} out={out}")
    return EXIT_OK


def cmd_bounce_prob(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.require("r_max")
    scales = derived_scales(cfg.params, cfg.r_max)
    prob = bounce_prob_lower_bound(
        cfg.params, scales, n_samples=args.samples, seed=cfg.seed
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_json(cfg.out_dir / "bounce_prob.json", dataclasses.asdict(prob))
    print(
        f"bounce-prob: bound={prob.bound!r} available={prob.bound_available} "
        f"mc={prob.mc_estimate!r} sigma={prob.mc_sigma!r}"
    )
    return EXIT_OK


def cmd_find_periodic(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.require("r_init", "w3_init", "epsilon")
    params = cfg.params
    eps_hi = cfg.epsilon
    failures: list[str] = []
    for _ in range(args.max_brackets):
        bracket = scan_for_bracket(
            params, cfg.r_init, cfg.w3_init, eps_hi, ratio=args.ratio
        )
        eps_hi = bracket[0]
        try:
            # shooting uses the library's tight event localization; the
            # config's integrator tolerances apply to the other commands
            sol = find_periodic(
                params, cfg.r_init, cfg.w3_init, bracket, t_floor=args.t_floor
            )
        except ShootingError as exc:
            failures.append(str(exc))
            continue
        out = cfg.out_dir
        out.mkdir(parents=True, exist_ok=True)
        n_min, n_max = sol.extremum_counts()
        write_json(
            out / "periodic.json",
            {
                "epsilon": sol.epsilon,
                "period": sol.period,
                "t_max": sol.t_max,
                "r_max": sol.shooting.r_max,
                "closure_residual": sol.closure_residual,
                "phase_residual": sol.shooting.residual,
                "target_index": sol.shooting.target_index,
                "interior_minima": n_min,
                "maxima": n_max,
            },
        )
        system = rescaled_system(params, sol.epsilon)
        write_trajectory_csv(out / "periodic.csv", params, sol.trajectory, system)
        print(
            f"find-periodic: epsilon={sol.epsilon!r} period={sol.period!r} "
            f"closure={sol.closure_residual!r} out={out}"
        )
        return EXIT_OK
    raise ShootingError(
        f"no admissible periodic solution in {args.max_brackets} brackets "
        f"below epsilon={cfg.epsilon} ({len(failures)} rejected: "
        f"{'; '.join(failures)})"
    )


def cmd_energy_check(cfg: RunConfig, args: argparse.Namespace) -> int:
    _, trajectory = _simulate_trajectory(cfg)
    report = energy_report(cfg.params, trajectory)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "energy.csv",
        ("t", "T00", "Trr", "weak", "dominant", "strong", "marginal"),
        zip(report.t, report.t00, report.trr, report.weak, report.dominant,
            report.strong, report.marginal),
    )
    write_json(
        out / "energy_events.json",
        [
            {
                "kind": row.kind,
                "t": row.t,
                "R": row.r,
                "T00": row.t00,
                "Trr": row.trr,
                "weak": bool(row.weak),
                "dominant": bool(row.dominant),
                "strong": bool(row.strong),
                "marginal": bool(row.marginal),
                "ok": bool(row.ok),
            }
            for row in report.event_rows
        ],
    )
    n = len(report.t)
    bad = [row for row in report.event_rows if not row.ok]
    print(
        f"energy-check: samples={n} weak={int(np.sum(report.weak))}/{n} "
        f"strong={int(np.sum(report.strong))}/{n} "
        f"event_rows={len(report.event_rows)} violations={len(bad)}"
    )
    return EXIT_OK


def _sweep_row(params, scales, r_max, t_end, integrator, phi):
    era1 = era1_solve(params, r_max, phi)
    condition, root = bounce_condition(params, scales, era1.phi_tilt)
    era2 = era2_solve(params, era1, t_end, config=integrator)
    bounced = era2.outcome == "bounce"
    return (
        phi,
        era1.phi_tilt,
        int(condition),
        root,
        era2.outcome,
        era2.r_bounce,
        int(condition == bounced),
    )


def cmd_sweep(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.require("r_max")
    if cfg.t_end is None:
        raise ConfigError("sweep requires key 't_end'")
    scales = derived_scales(cfg.params, cfg.r_max)
    phis = [2.0 * math.pi * i / args.grid_size for i in range(args.grid_size)]
    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        rows = list(
            pool.map(
                lambda phi: _sweep_row(
                    cfg.params, scales, cfg.r_max, cfg.t_end, cfg.integrator, phi
                ),
                phis,
            )
        )

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "sweep.csv",
        ("phi_max", "phi_tilt", "condition", "root", "outcome", "r_bounce",
         "agrees"),
        [
            [phi, phi_tilt, cond, "" if root is None else root, outcome,
             "" if r_bounce is None else r_bounce, agrees]
            for phi, phi_tilt, cond, root, outcome, r_bounce, agrees in rows
        ],
    )

    n_bounce = sum(1 for row in rows if row[4] == "bounce")
    fraction = n_bounce / len(rows)
    prob = bounce_prob_lower_bound(
        cfg.params, scales, n_samples=args.samples, seed=cfg.seed
    )
    grid_sigma = math.sqrt(max(fraction * (1.0 - fraction), 0.0) / len(rows))
    gap = abs(fraction - prob.mc_estimate)
    tol = 3.0 * math.hypot(prob.mc_sigma, grid_sigma)
    write_json(
        out / "sweep_summary.json",
        {
            "n_grid": len(rows),
            "n_bounce": n_bounce,
            "grid_fraction": fraction,
            "grid_sigma": grid_sigma,
            "bound": prob.bound,
            "bound_available": prob.bound_available,
            "mc_estimate": prob.mc_estimate,
            "mc_sigma": prob.mc_sigma,
            "within_3sigma": bool(gap <= tol),
            "n_condition_outcome_disagreements": sum(
                1 for row in rows if not row[6]
            ),
        },
    )
    print(
        f"sweep: grid_fraction={fraction!r} mc={prob.mc_estimate!r} "
        f"within_3sigma={gap <= tol} out={out}"
    )
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spincosmo",
        description=(
            "Bloch-vector spin-condensate cosmology: simulation, bounce "
            "analysis, and periodic-solution search"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to an INI run configuration")
        p.set_defaults(handler=handler)
        return p

    add("simulate", cmd_simulate,
        "integrate the configured scenario; write trajectory/events/diagnostics")
    add("scales", cmd_scales, "derived characteristic scales as JSON")
    add("approx", cmd_approx,
        "instantaneous-tilt Era-I/II pipeline; write era CSVs and summary")
    p_prob = add("bounce-prob", cmd_bounce_prob,
                 "analytic bounce-probability bound plus seeded Monte-Carlo")
    p_prob.add_argument("--samples", type=int, default=MC_SAMPLES_DEFAULT,
                        help="Monte-Carlo sample count")
    p_per = add("find-periodic", cmd_find_periodic,
                "scan epsilon downward and shoot for a time-periodic solution")
    p_per.add_argument("--ratio", type=float, default=SCAN_RATIO_DEFAULT,
                       help="geometric scan ratio between shooting legs")
    p_per.add_argument("--max-brackets", type=int, default=MAX_BRACKETS_DEFAULT,
                       help="brackets to try before giving up")
    p_per.add_argument("--t-floor", type=float, default=0.0,
                       help="reject candidate half-periods at or below this")
    add("energy-check", cmd_energy_check,
        "energy-condition flags along the configured trajectory")
    p_sweep = add("sweep", cmd_sweep,
                  "tilt-phase grid of approximate outcomes vs the probability bound")
    p_sweep.add_argument("--grid-size", type=int, default=GRID_SIZE_DEFAULT,
                         help="number of evenly spaced phases in [0, 2pi)")
    p_sweep.add_argument("--samples", type=int, default=MC_SAMPLES_DEFAULT,
                         help="Monte-Carlo sample count for the reference")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BracketError, ShootingError) as exc:
        print(f"search failed: {exc}", file=sys.stderr)
        return EXIT_SEARCH
    except (IntegrationError, RegimeError, InvariantViolation, ValueError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
