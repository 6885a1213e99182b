"""Experiment configuration: strict TOML loading and object assembly.

Unknown sections or keys are hard errors naming the offending path, so a
misspelled key can never silently fall back to a default.  The resolved
configuration (defaults filled in) is what gets hashed into artifacts.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - interpreter-dependent import
    import tomli as tomllib

from .errors import ConfigError
from .jumps import DiscreteJumpSizes, GaussianJumpSizes, LevyMeasureSpec
from .model import LqSpec, application1_preset, application2_preset
from .regime import GeneratorMatrix
from .report import config_hash

_PRESETS = ("application1", "application2")

# section -> key -> (type, default); REQUIRED means no default.
_REQUIRED = object()
_SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "preset": (str, _REQUIRED),
        "master_seed": (int, _REQUIRED),
        "n_paths": (int, _REQUIRED),
        "threads": (int, 1),
    },
    "grid": {
        "horizon": (float, _REQUIRED),
        "n_steps": (int, _REQUIRED),
    },
    "chain": {
        "rates": (list, _REQUIRED),
        "initial_state": (int, 1),
    },
    "jumps": {
        "rate": (float, 0.0),
        "kind": (str, "discrete"),
        "atoms": (list, [1.0]),
        "probs": (list, [1.0]),
        "mean": (float, 0.0),
        "std": (float, 1.0),
    },
    "application1": {
        "c1": (list, _REQUIRED),
        "c2": (list, _REQUIRED),
        "c3": (list, _REQUIRED),
        "c4": (list, _REQUIRED),
        "sigma": (float, 1.0),
        "gamma_scale": (float, 0.0),
    },
    "application2": {
        "x0": (float, _REQUIRED),
        "mu": (list, [0.0, 0.0]),
        "sigma": (list, _REQUIRED),
        "gamma_scale": (float, 0.0),
        "c1": (float, 0.0),
        "c2": (float, 0.0),
        "c": (float, 0.0),
        "c0": (float, 0.0),
    },
    "policy": {
        "kind": (str, "optimal"),
        "value": (float, 0.0),
        "scale": (float, 1.0),
    },
    "derivative": {
        "bump": (float, 1e-3),
        "n_directions": (int, 8),
    },
    "verify": {
        "n_buckets": (int, 16),
        "se_multiplier": (float, 3.0),
        "abs_tolerance": (float, 1e-12),
    },
    "sweep": {
        "deltas": (list, [-0.2, -0.1, 0.0, 0.1, 0.2]),
    },
    "bsde": {
        "scheme": (str, "explicit"),
    },
    "simulate": {
        "n_export": (int, 10),
    },
    "closed_form": {
        "n_times": (int, 11),
    },
}


def _coerce(section: str, key: str, spec_type, value):
    if spec_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key} must be a number")
        return float(value)
    if spec_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{key} must be an integer")
        return int(value)
    if not isinstance(value, spec_type):
        raise ConfigError(f"{section}.{key} must be of type {spec_type.__name__}")
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration plus the hash stamped into artifacts."""

    resolved: dict
    hash: str

    # -- plain accessors ------------------------------------------------------
    @property
    def preset(self) -> str:
        return self.resolved["run"]["preset"]

    @property
    def seed(self) -> int:
        return self.resolved["run"]["master_seed"]

    @property
    def n_paths(self) -> int:
        return self.resolved["run"]["n_paths"]

    @property
    def threads(self) -> int:
        return self.resolved["run"]["threads"]

    @property
    def horizon(self) -> float:
        return self.resolved["grid"]["horizon"]

    @property
    def n_steps(self) -> int:
        return self.resolved["grid"]["n_steps"]

    @property
    def initial_state(self) -> int:
        return self.resolved["chain"]["initial_state"]

    def section(self, name: str) -> dict:
        return self.resolved[name]

    # -- object assembly -------------------------------------------------------
    def generator(self) -> GeneratorMatrix:
        return GeneratorMatrix(np.array(self.resolved["chain"]["rates"], dtype=np.float64))

    def jump_sizes(self):
        j = self.resolved["jumps"]
        if j["rate"] == 0.0:
            return None
        if j["kind"] == "discrete":
            return DiscreteJumpSizes(np.array(j["atoms"], float), np.array(j["probs"], float))
        if j["kind"] == "normal":
            return GaussianJumpSizes(j["mean"], j["std"])
        raise ConfigError("jumps.kind must be 'discrete' or 'normal'")

    def jump_measure(self) -> LevyMeasureSpec:
        dim = self.generator().dim
        return LevyMeasureSpec.uniform(self.resolved["jumps"]["rate"], self.jump_sizes(), dim)

    def gamma_loading(self, scale: float):
        if scale == 0.0:
            return None
        return lambda t, z: scale * z

    def lq_spec(self) -> LqSpec:
        if self.preset != "application1":
            raise ConfigError("closed-form coefficients exist only for preset 'application1'")
        sec = self.resolved["application1"]
        sigma_const = sec["sigma"]
        return LqSpec(
            c1=tuple(sec["c1"]),
            c2=tuple(sec["c2"]),
            c3=tuple(sec["c3"]),
            c4=tuple(sec["c4"]),
            horizon=self.horizon,
            chain=self.generator(),
            sigma=lambda t, s=sigma_const: s,
            gamma=self.gamma_loading(sec["gamma_scale"]),
            jump_rate=self.resolved["jumps"]["rate"] if sec["gamma_scale"] != 0.0 else 0.0,
            jump_sizes=self.jump_sizes() if sec["gamma_scale"] != 0.0 else None,
        )

    def models(self):
        if self.preset == "application1":
            return application1_preset(self.lq_spec())
        sec = self.resolved["application2"]
        forward, bsde = application2_preset(
            x0=sec["x0"],
            mu=tuple(sec["mu"]),
            sigma=tuple(sec["sigma"]),
            gamma=self.gamma_loading(sec["gamma_scale"]),
            levy=self.jump_measure(),
            c1=sec["c1"],
            c2=sec["c2"],
            c=sec["c"],
            c0=sec["c0"],
        )
        return forward, None, bsde

    def x0(self) -> float:
        if self.preset == "application1":
            return 0.0
        return self.resolved["application2"]["x0"]


def resolve(raw: dict) -> ExperimentConfig:
    """Validate a parsed TOML mapping and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a table")
    for section in raw:
        if section not in _SCHEMA:
            raise ConfigError(f"unknown configuration section [{section}]")
        if not isinstance(raw[section], dict):
            raise ConfigError(f"[{section}] must be a table")
        for key in raw[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown configuration key {section}.{key}")
    resolved: dict = {}
    for section, keys in _SCHEMA.items():
        resolved[section] = {}
        for key, (spec_type, default) in keys.items():
            provided = section in raw and raw[section].get(key) is not None
            if provided:
                resolved[section][key] = _coerce(section, key, spec_type, raw[section][key])
            else:
                resolved[section][key] = default if default is not _REQUIRED else None
    _validate(resolved)
    return ExperimentConfig(resolved=resolved, hash=config_hash(resolved))


def _require(resolved, section, key):
    if resolved[section][key] is None:
        raise ConfigError(f"missing required configuration key {section}.{key}")


def _validate(resolved: dict) -> None:
    for section, key in (
        ("run", "preset"),
        ("run", "master_seed"),
        ("run", "n_paths"),
        ("grid", "horizon"),
        ("grid", "n_steps"),
        ("chain", "rates"),
    ):
        _require(resolved, section, key)
    run = resolved["run"]
    if run["preset"] not in _PRESETS:
        raise ConfigError(f"run.preset must be one of {_PRESETS}, got {run['preset']!r}")
    if run["n_paths"] < 1:
        raise ConfigError("run.n_paths must be >= 1")
    if run["master_seed"] < 0:
        raise ConfigError("run.master_seed must be >= 0")
    if run["threads"] < 1:
        raise ConfigError("run.threads must be >= 1")
    if resolved["grid"]["horizon"] <= 0:
        raise ConfigError("grid.horizon must be positive")
    if resolved["grid"]["n_steps"] < 1:
        raise ConfigError("grid.n_steps must be >= 1")
    preset = run["preset"]
    for key, (spec_type, default) in _SCHEMA[preset].items():
        if default is _REQUIRED:
            _require(resolved, preset, key)
    if preset == "application1":
        for key in ("c1", "c2", "c3", "c4"):
            if len(resolved["application1"][key]) != 2:
                raise ConfigError(f"application1.{key} must list exactly two per-regime values")
    else:
        if resolved["application2"]["x0"] <= 0:
            raise ConfigError("application2.x0 must be positive")
    if resolved["policy"]["kind"] not in ("optimal", "scaled-optimal", "constant"):
        raise ConfigError("policy.kind must be optimal, scaled-optimal, or constant")
    if resolved["bsde"]["scheme"] not in ("explicit", "implicit-picard"):
        raise ConfigError("bsde.scheme must be explicit or implicit-picard")
    if resolved["derivative"]["bump"] <= 0:
        raise ConfigError("derivative.bump must be positive")
    if resolved["jumps"]["rate"] < 0:
        raise ConfigError("jumps.rate must be >= 0")


def load(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except FileNotFoundError as err:
        raise ConfigError(f"configuration file not found: {path}") from err
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"configuration parse error in {path}: {err}") from err
    return resolve(raw)


def override(cfg: ExperimentConfig, n_paths: int | None = None, seed: int | None = None,
             threads: int | None = None) -> ExperimentConfig:
    """Apply command-line overrides and re-resolve (hash follows the result)."""
    resolved = {k: dict(v) for k, v in cfg.resolved.items()}
    if n_paths is not None:
        resolved["run"]["n_paths"] = n_paths
    if seed is not None:
        resolved["run"]["master_seed"] = seed
    if threads is not None:
        resolved["run"]["threads"] = threads
    return resolve(resolved)
