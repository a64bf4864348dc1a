"""Deterministic CSV and JSON emission for trajectories and reports.

All floating-point values are written in their shortest round-trip decimal
form (Python repr), JSON objects with sorted keys, and lines terminated
with a bare newline, so identical inputs produce byte-identical files on
any platform.  Event arrays are validated against the shipped JSON schema
before they are written.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema
import numpy as np

from .integrate import Event, Trajectory
from .model import BlochSystem, ModelParams, energy_momentum_arrays

TRAJECTORY_COLUMNS = (
    "t",
    "R",
    "Rdot",
    "w1",
    "w2",
    "w3",
    "T00",
    "Trr",
    "constraint_residual",
    "norm_drift",
)


def format_value(value) -> str:
    """Shortest round-trip decimal for floats; plain str otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(format_value(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def trajectory_table(
    params: ModelParams, trajectory: Trajectory, system: BlochSystem
) -> np.ndarray:
    """Sample table with the stress components and per-sample diagnostics.

    Norm drift is measured against the initial Bloch norm and scaled by the
    particle number, so it starts at zero for any admissible start.
    """
    y = trajectory.y
    t00, trr = energy_momentum_arrays(params, y[:, 0], y[:, 2], y[:, 4])
    residual = system.residual_samples(y)
    norms = np.linalg.norm(y[:, 2:5], axis=1)
    drift = np.abs(norms - norms[0]) / params.n_particle
    return np.column_stack([trajectory.t, y[:, 0], y[:, 1], y[:, 2], y[:, 3],
                            y[:, 4], t00, trr, residual, drift])


def write_trajectory_csv(
    path: str | Path,
    params: ModelParams,
    trajectory: Trajectory,
    system: BlochSystem,
) -> None:
    table = trajectory_table(params, trajectory, system)
    write_csv(path, TRAJECTORY_COLUMNS, table)


def events_payload(events: Sequence[Event]) -> list[dict]:
    return [
        {
            "kind": ev.kind,
            "t": float(ev.t),
            "R": float(ev.y[0]),
            "Rdot": float(ev.y[1]),
            "w": [float(c) for c in ev.y[2:5]],
            "Rddot_sign": int(ev.rddot_sign),
        }
        for ev in events
    ]


def events_schema() -> dict:
    text = (
        resources.files("spincosmo.schemas")
        .joinpath("events.schema.json")
        .read_text(encoding="utf-8")
    )
    return json.loads(text)


def validate_events_payload(payload: list[dict]) -> None:
    """Raise jsonschema.ValidationError if the payload violates the schema."""
    jsonschema.validate(payload, events_schema())


def write_json(path: str | Path, payload) -> None:
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def write_events_json(path: str | Path, events: Sequence[Event]) -> None:
    payload = events_payload(events)
    validate_events_payload(payload)
    write_json(path, payload)


def diagnostics_payload(trajectory: Trajectory) -> dict:
    diag = trajectory.diagnostics
    payload = {
        "status": trajectory.status,
        "n_samples": int(len(trajectory.t)),
        "t_first": float(trajectory.t[0]) if len(trajectory.t) else None,
        "t_last": float(trajectory.t[-1]) if len(trajectory.t) else None,
        "n_events": len(trajectory.events),
    }
    if diag is not None:
        payload.update(
            n_steps=diag.n_steps,
            n_rejected=diag.n_rejected,
            n_rhs_evals=diag.n_rhs_evals,
            max_constraint_residual=diag.max_constraint_residual,
            max_norm_drift=diag.max_norm_drift,
        )
    return payload


def write_diagnostics_json(path: str | Path, trajectory: Trajectory) -> None:
    write_json(path, diagnostics_payload(trajectory))
