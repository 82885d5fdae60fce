"""Experiment configuration: a flat ``key = value`` file plus ``--key value`` overrides.

Keys are validated before any run; unknown keys raise ``ConfigError`` naming the
key.  Initial-data generator parameters use the ``init.`` prefix
(``init.eps = 1``).  Unset optional keys fall back to the experiment preset.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .flow import StepperConfig

EXPERIMENTS = tuple(f"E{i}" for i in range(1, 13))
BACKGROUNDS = ("flat", "bump")
INTEGRATORS = ("euler", "rk4")


@dataclass
class ExperimentConfig:
    experiment: str = ""
    dim: int = 4
    points_per_axis: int | None = None
    fine_points_per_axis: int | None = None
    side_length: float = 1.0
    background: str = "flat"
    background_amplitude: float = 0.05
    initial_data: str | None = None
    init: dict = field(default_factory=dict)
    cfl: float = 0.2
    max_dt: float = 1.0
    integrator: str = "euler"
    max_halvings: int = 8
    abort_a: float = math.inf
    final_time: float | None = None
    mollify_scale: float | None = None
    radius_inner: float | None = None
    radius_outer: float | None = None
    samples: int | None = None
    output_dir: str | None = None
    seed: int = 0
    threads: int | None = None

    def stepper(self) -> StepperConfig:
        return StepperConfig(
            cfl=self.cfl, max_dt=self.max_dt, integrator=self.integrator, abort_a=self.abort_a, max_halvings=self.max_halvings
        )

    def out_dir(self) -> Path:
        return Path(self.output_dir or f"runs/{self.experiment}")

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["abort_a"] = str(self.abort_a) if math.isinf(self.abort_a) else self.abort_a
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_OPTIONAL_INT = {"points_per_axis", "fine_points_per_axis", "samples", "threads"}
_OPTIONAL_FLOAT = {"final_time", "mollify_scale", "radius_inner", "radius_outer"}
_OPTIONAL_STR = {"initial_data", "output_dir"}


def _parse_number(key: str, raw: str, kind: type):
    try:
        if kind is int:
            val = float(raw)
            if not val.is_integer():
                raise ValueError
            return int(val)
        return float(raw)
    except ValueError:
        raise ConfigError(key, f"expected {kind.__name__}, got {raw!r}") from None


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key in _OPTIONAL_INT:
        return None if raw.lower() in ("", "none") else _parse_number(key, raw, int)
    if key in _OPTIONAL_FLOAT:
        return None if raw.lower() in ("", "none") else _parse_number(key, raw, float)
    if key in _OPTIONAL_STR:
        return None if raw.lower() in ("", "none") else raw
    default = _FIELDS[key].default
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return _parse_number(key, raw, int)
    if isinstance(default, float):
        return _parse_number(key, raw, float)
    return raw


def parse_pairs(pairs: list[tuple[str, str]]) -> dict:
    values: dict = {}
    init: dict = {}
    for key, raw in pairs:
        key = key.strip().replace("-", "_") if not key.startswith("init.") else key.strip()
        if key.startswith("init."):
            name = key[5:]
            if not name:
                raise ConfigError(key, "empty initial-data parameter name")
            init[name] = _parse_number(key, raw, float)
            continue
        if key not in _FIELDS or key == "init":
            raise ConfigError(key, "unknown configuration key")
        values[key] = _coerce(key, raw)
    if init:
        values["init"] = init
    return values


def read_pairs(text: str) -> list[tuple[str, str]]:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
        k, v = line.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    return pairs


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}, got {cfg.experiment!r}")
    if not 2 <= cfg.dim <= 4:
        raise ConfigError("dim", "must lie in [2, 4]")
    for key in ("points_per_axis", "fine_points_per_axis"):
        n = getattr(cfg, key)
        if n is not None and (n < 8 or n % 2):
            raise ConfigError(key, f"must be an even integer >= 8, got {n}")
    if not cfg.side_length > 0:
        raise ConfigError("side_length", "must be positive")
    if cfg.background not in BACKGROUNDS:
        raise ConfigError("background", f"must be one of {', '.join(BACKGROUNDS)}")
    if cfg.integrator not in INTEGRATORS:
        raise ConfigError("integrator", f"must be one of {', '.join(INTEGRATORS)}")
    if not 0 < cfg.cfl <= 1:
        raise ConfigError("cfl", "must lie in (0, 1]")
    if not cfg.max_dt > 0:
        raise ConfigError("max_dt", "must be positive")
    if cfg.max_halvings < 0:
        raise ConfigError("max_halvings", "must be >= 0")
    if cfg.final_time is not None and not cfg.final_time > 0:
        raise ConfigError("final_time", "must be positive")
    for key in ("mollify_scale", "radius_inner", "radius_outer"):
        v = getattr(cfg, key)
        if v is not None and not v > 0:
            raise ConfigError(key, "must be positive")
    if cfg.radius_inner is not None and cfg.radius_outer is not None and not cfg.radius_inner < cfg.radius_outer:
        raise ConfigError("radius_inner", "must be below radius_outer")
    if cfg.samples is not None and cfg.samples < 1:
        raise ConfigError("samples", "must be >= 1")
    if cfg.threads is not None and cfg.threads < 1:
        raise ConfigError("threads", "must be >= 1")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed", "must be a 64-bit unsigned integer")
    return cfg


def load_config(path: str | Path | None = None, overrides: list[tuple[str, str]] = ()) -> ExperimentConfig:
    pairs = []
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError("config", f"no such file {str(p)!r}")
        pairs.extend(read_pairs(p.read_text()))
    pairs.extend(overrides)
    return validate(ExperimentConfig(**parse_pairs(pairs)))


def from_mapping(mapping: dict) -> ExperimentConfig:
    """Build a config from Python values (as strings or numbers), with validation."""
    pairs = []
    for k, v in mapping.items():
        if k == "init":
            pairs.extend((f"init.{n}", str(x)) for n, x in v.items())
        else:
            pairs.append((k, str(v)))
    return validate(ExperimentConfig(**parse_pairs(pairs)))
