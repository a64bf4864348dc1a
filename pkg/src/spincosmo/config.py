"""Run configuration parsing and validation for the command-line tools.

One INI file with a single [run] section of flat keys drives every
subcommand; each command reads only the keys it needs.  Two scenarios fix
the initial data: max_start begins at rest at R = r_max with transverse
Bloch phase phi_max (the exact system), bounce_start begins at rest at
R = r_init in the rescaled family at the given epsilon with the transverse
components (w2_init, w3_init) spelled out.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

from .integrate import IntegratorConfig
from .model import ModelParams

SCENARIOS = ("max_start", "bounce_start")

_MODEL_KEYS = ("lambda", "m", "k")
_MAX_START_KEYS = ("r_max", "phi_max")
_BOUNCE_START_KEYS = ("r_init", "w2_init", "w3_init", "epsilon")
_TOL_KEYS = ("rel_tol", "abs_tol", "event_tol")

KNOWN_KEYS = frozenset(
    _MODEL_KEYS
    + ("scenario",)
    + _MAX_START_KEYS
    + _BOUNCE_START_KEYS
    + ("t_end",)
    + _TOL_KEYS
    + ("seed", "out_dir")
)

SEED_DEFAULT = 42


class ConfigError(ValueError):
    """A run configuration that cannot be parsed or validated."""


@dataclass(frozen=True)
class RunConfig:
    """Validated inputs for one command invocation."""

    params: ModelParams
    scenario: str
    integrator: IntegratorConfig
    seed: int
    out_dir: Path
    r_max: float | None = None
    phi_max: float | None = None
    r_init: float | None = None
    w2_init: float = 0.0
    w3_init: float | None = None
    epsilon: float | None = None
    t_end: float | None = None

    def require(self, *names: str) -> None:
        """Raise ConfigError unless every named field was configured."""
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(
                f"scenario '{self.scenario}' run is missing required "
                f"key(s): {', '.join(missing)}"
            )


def _parse_float(source: str, key: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise ConfigError(f"{source}: key '{key}': not a number: {raw!r}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"{source}: key '{key}': must be finite, got {raw!r}")
    return value


def _parse_int(source: str, key: str, raw: str) -> int:
    try:
        return int(raw, 10)
    except ValueError as exc:
        raise ConfigError(f"{source}: key '{key}': not an integer: {raw!r}") from exc


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse and validate INI text into a RunConfig.

    Raises ConfigError with a line or key diagnostic on any problem; the
    underlying INI parser reports the offending line for syntax and
    duplicate-key errors.
    """
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";")
    )
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if parser.sections() != ["run"]:
        found = ", ".join(parser.sections()) or "none"
        raise ConfigError(
            f"{source}: expected exactly one [run] section, found: {found}"
        )
    raw = dict(parser["run"])

    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s): {', '.join(unknown)}")
    for key in _MODEL_KEYS + ("scenario",):
        if key not in raw:
            raise ConfigError(f"{source}: missing required key '{key}'")

    try:
        params = ModelParams(
            lam=_parse_float(source, "lambda", raw["lambda"]),
            m=_parse_float(source, "m", raw["m"]),
            k=_parse_int(source, "k", raw["k"]),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    scenario = raw["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError(
            f"{source}: scenario must be one of {', '.join(SCENARIOS)}, "
            f"got {scenario!r}"
        )
    foreign = _BOUNCE_START_KEYS if scenario == "max_start" else _MAX_START_KEYS
    mixed = sorted(k for k in foreign if k in raw)
    if mixed:
        raise ConfigError(
            f"{source}: key(s) {', '.join(mixed)} do not belong to scenario "
            f"'{scenario}' (exactly one scenario per run)"
        )

    def opt_float(key: str) -> float | None:
        return _parse_float(source, key, raw[key]) if key in raw else None

    r_max = opt_float("r_max")
    phi_max = opt_float("phi_max")
    r_init = opt_float("r_init")
    w2_init = opt_float("w2_init")
    w3_init = opt_float("w3_init")
    epsilon = opt_float("epsilon")
    t_end = opt_float("t_end")

    if scenario == "max_start":
        for key, value in (("r_max", r_max), ("phi_max", phi_max)):
            if value is None:
                raise ConfigError(
                    f"{source}: scenario 'max_start' requires key '{key}'"
                )
        if not r_max > 0.0:
            raise ConfigError(f"{source}: r_max must be positive, got {r_max}")
    else:
        for key, value in (
            ("r_init", r_init),
            ("w3_init", w3_init),
            ("epsilon", epsilon),
        ):
            if value is None:
                raise ConfigError(
                    f"{source}: scenario 'bounce_start' requires key '{key}'"
                )
        if not r_init > 0.0:
            raise ConfigError(f"{source}: r_init must be positive, got {r_init}")
        if not epsilon > 0.0:
            raise ConfigError(f"{source}: epsilon must be positive, got {epsilon}")

    if t_end is not None and not t_end > 0.0:
        raise ConfigError(f"{source}: t_end must be positive, got {t_end}")

    overrides = {
        key: _parse_float(source, key, raw[key]) for key in _TOL_KEYS if key in raw
    }
    try:
        integrator = dataclasses.replace(IntegratorConfig(), **overrides)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    seed = _parse_int(source, "seed", raw["seed"]) if "seed" in raw else SEED_DEFAULT
    out_dir = Path(raw.get("out_dir", "."))

    return RunConfig(
        params=params,
        scenario=scenario,
        integrator=integrator,
        seed=seed,
        out_dir=out_dir,
        r_max=r_max,
        phi_max=phi_max,
        r_init=r_init,
        w2_init=0.0 if w2_init is None else w2_init,
        w3_init=w3_init,
        epsilon=epsilon,
        t_end=t_end,
    )


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a configuration file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))
