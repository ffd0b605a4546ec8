"""Run configuration: strict TOML parsing, overrides, validation and hashing."""

from __future__ import annotations

import hashlib
import math
import tomllib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import orjson

from .errors import CnsError, ConfigError
from .field import GridSpec, ModelParams, State, make_grid, new_state
from .noise import NoiseBasis, build_noise, sigma0_for_sup_norm
from .solver import StepSpec
from .stats import gamma0

SECTIONS = ("grid", "model", "noise", "stepping", "ensemble", "initial", "output", "scan")
REQUIRED = ("n_cells", "A", "dt", "M", "T", "seed")
OUTPUT_ONLY = ("directory",)
SAMPLE_INTERVAL = 0.01


@dataclass
class RunConfig:
    n_cells: int
    A: float
    dt: float
    M: int
    T: float
    seed: int
    K: int = 4
    sigma0: float = 0.0
    p: float = 3.0
    sigma_sup_sq: float | None = None
    cfl_max: float = 0.5
    T0: float = 0.0
    stride: float | None = None
    rho_amp: float = 0.0
    rho_mode: int = 1
    u_amp: float = 0.0
    u_mode: int = 1
    directory: str = "runs"
    snapshot_stride: float = 0.0
    checkpoint_stride: float = 0.0
    A_list: list[float] = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0])
    eta: float = 1.0
    R_grid: list[float] = field(default_factory=lambda: [1.0, 2.0, 3.0])
    perturbation: float = 1e-6
    verify_T: float = 0.05

    @property
    def sample_every(self) -> int:
        assert self.stride is not None
        return round(self.stride / self.dt)

    def steps_per(self, interval: float) -> int:
        """Step count for a time interval; 0 disables."""
        return round(interval / self.dt) if interval > 0 else 0

    def canonical(self) -> dict[str, Any]:
        data = asdict(self)
        for key in OUTPUT_ONLY:
            data.pop(key)
        return data


_KNOWN = {f.name: f for f in fields(RunConfig)}
_INT_KEYS = {"n_cells", "M", "seed", "K", "rho_mode", "u_mode"}
_LIST_KEYS = {"A_list", "R_grid"}
_STR_KEYS = {"directory"}


def _flatten(raw: dict[str, Any]) -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in raw.items():
        if key in SECTIONS and isinstance(value, dict):
            items = value.items()
        else:
            items = [(key, value)]
        for k, v in items:
            if k in flat:
                raise ConfigError(f"Duplicate key '{k}'", details={"key": k})
            flat[k] = v
    return flat


def _parse_override(item: str) -> tuple[str, Any]:
    key, sep, text = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"Override must look like key=value, got '{item}'")
    try:
        value = tomllib.loads(f"v = {text.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        # bare words are taken as strings
        value = text.strip()
    return key, value


def _coerce(key: str, value: Any) -> Any:
    if isinstance(value, bool):
        raise ConfigError(f"'{key}' must be numeric, got a boolean", details={"key": key})
    if key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigError(f"'{key}' must be a string", details={"key": key})
        return value
    if key in _LIST_KEYS:
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"'{key}' must be a list of numbers", details={"key": key})
        return [float(v) for v in value]
    if key in _INT_KEYS:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"'{key}' must be an integer, got {value!r}", details={"key": key})
        return value
    if not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}", details={"key": key})
    return float(value)


def _is_multiple(value: float, unit: float) -> bool:
    k = round(value / unit)
    return k >= 1 and abs(k * unit - value) <= 1e-9 * max(value, unit)


def validate(config: RunConfig) -> RunConfig:
    """Re-check every downstream constraint with field-level messages."""

    def fail(key: str, message: str) -> None:
        raise ConfigError(f"{key}: {message}", details={"field": key, "value": getattr(config, key)})

    if config.n_cells < 8:
        fail("n_cells", "must be >= 8")
    if not (config.A > 0 and math.isfinite(config.A)):
        fail("A", "must be > 0")
    if config.K < 1:
        fail("K", "must be >= 1")
    if not config.sigma0 >= 0:
        fail("sigma0", "must be >= 0")
    if config.sigma_sup_sq is not None and not config.sigma_sup_sq >= 0:
        fail("sigma_sup_sq", "must be >= 0")
    if config.p < 3:
        fail("p", "violates H^2 noise assumption (p >= 3)")
    if not (config.dt > 0 and math.isfinite(config.dt)):
        fail("dt", "must be > 0")
    if not 0 < config.cfl_max <= 1:
        fail("cfl_max", "must lie in (0, 1]")
    if config.M < 1:
        fail("M", "must be >= 1")
    if not 0 <= config.T0 < config.T:
        fail("T0", "must satisfy 0 <= T0 < T")
    if not _is_multiple(config.T, config.dt):
        fail("T", "must be a positive multiple of dt")
    if config.stride is None or not _is_multiple(config.stride, config.dt):
        fail("stride", "must be a positive multiple of dt")
    for key in ("snapshot_stride", "checkpoint_stride"):
        value = getattr(config, key)
        if value < 0 or (value > 0 and not _is_multiple(value, config.dt)):
            fail(key, "must be 0 or a positive multiple of dt")
    if abs(config.rho_amp) >= 1:
        fail("rho_amp", "must satisfy |rho_amp| < 1 for a positive density")
    if not config.eta > 0:
        fail("eta", "must be > 0")
    if not config.A_list or any(a <= 0 for a in config.A_list):
        fail("A_list", "must be a nonempty list of positive values")
    if not config.R_grid or any(r < 1 for r in config.R_grid):
        fail("R_grid", "every R must be >= 1")
    if not config.perturbation >= 0:
        fail("perturbation", "must be >= 0")
    if not _is_multiple(config.verify_T, config.dt):
        fail("verify_T", "must be a positive multiple of dt")
    return config


def parse_config(
    path: Path | None = None,
    overrides: list[str] | None = None,
    seed: int | None = None,
    directory: str | None = None,
) -> RunConfig:
    """Build a validated RunConfig from a TOML file and key=value overrides.

    Args:
        path: TOML file; optional when overrides supply every required key
        overrides: Repeatable --set items, parsed as TOML values
        seed: --seed flag
        directory: Resolved output directory

    Raises:
        ConfigError: Unreadable or malformed input, unknown or missing keys, constraint violations
    """
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                raw = _flatten(tomllib.load(f))
        except OSError as e:
            raise ConfigError(f"Cannot read config {path}: {e}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Invalid TOML in {path}: {e}") from e

    for item in overrides or []:
        key, value = _parse_override(item)
        raw[key] = value
    if seed is not None:
        raw["seed"] = seed
    if directory is not None:
        raw["directory"] = directory

    unknown = sorted(set(raw) - set(_KNOWN))
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}", details={"unknown": unknown})
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"Missing required keys: {', '.join(missing)}", details={"missing": missing})

    values = {k: _coerce(k, v) for k, v in raw.items()}
    if "sigma_sup_sq" in values and "sigma0" in values:
        raise ConfigError("Give either sigma0 or sigma_sup_sq, not both")
    config = RunConfig(**values)
    if config.stride is None:
        config.stride = config.dt * max(1, round(SAMPLE_INTERVAL / config.dt))
    validate(config)

    if config.sigma_sup_sq is not None:
        try:
            config.sigma0 = sigma0_for_sup_norm(make_grid(config.n_cells), config.K, config.p, config.sigma_sup_sq)
        except CnsError as e:
            raise ConfigError(e.message, details=e.details) from e
    return config


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical defaulted config, output keys excluded."""
    payload = orjson.dumps(config.canonical(), option=orjson.OPT_SORT_KEYS)
    return hashlib.sha256(payload).hexdigest()


def build_grid(config: RunConfig) -> GridSpec:
    return make_grid(config.n_cells)


def build_params(config: RunConfig) -> ModelParams:
    return ModelParams(config.A)


def build_step(config: RunConfig) -> StepSpec:
    return StepSpec(dt=config.dt, cfl_max=config.cfl_max)


def build_basis(config: RunConfig, grid: GridSpec | None = None) -> NoiseBasis:
    return build_noise(grid or build_grid(config), config.K, config.sigma0, config.p)


def initial_fields(config: RunConfig, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """rho0 = 1 + rho_amp sin(2 pi m x) at centers, u0 = u_amp sin(pi k x) at faces."""
    rho = 1.0 + config.rho_amp * np.sin(2.0 * np.pi * config.rho_mode * grid.centers)
    u = config.u_amp * np.sin(np.pi * config.u_mode * grid.faces)
    u[0] = u[-1] = 0.0
    return rho, u


def build_initial_state(config: RunConfig, grid: GridSpec | None = None) -> State:
    grid = grid or build_grid(config)
    rho, u = initial_fields(config, grid)
    state, _ = new_state(grid, rho, u)
    return state


def describe(config: RunConfig, digest: str, basis: NoiseBasis) -> dict[str, Any]:
    """Provenance block embedded in every report; gamma0 is null without noise."""
    return {
        "config_hash": digest,
        "seed": config.seed,
        "sigma_sup_sq": basis.sup_norm_sq,
        "gamma0": gamma0(build_params(config), basis) if basis.sup_norm_sq > 0 else None,
        "noise": basis.describe(),
        "n_cells": config.n_cells,
        "dx": 1.0 / config.n_cells,
        "dt": config.dt,
        "cfl_max": config.cfl_max,
        "A": config.A,
    }
