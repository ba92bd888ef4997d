"""Sweep configuration files (YAML).

Recognized keys, all optional::

    grids: [15x15, 20x20]          # WxH strings, or a single int for a square
    agents: [2, 3]
    patterns: [stationary, evasive, random, patrol]
    intervals: [0, 5, 10, inf]     # 0 merges every step, inf never
    strategies: [forward_kl, reverse_kl, arithmetic, geometric, visit_weighted]
    noise: [degraded, {alpha: 0.3, beta: 0.1}]   # profile names or explicit rates
    trials: 10
    base_seed: 0
    workers: 1
    max_steps: 2500
    horizon: 3
    solver: {epsilon_floor: 1.0e-5, max_iterations: 2000, step_size: 0.1,
             quantization_levels: null}
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

import yaml

from .belief import GridShape
from .experiments import NOISE_PROFILES, SweepSpec, parse_interval
from .merge import SolverParams

KNOWN_KEYS = {"grids", "agents", "patterns", "intervals", "strategies", "noise", "trials",
              "base_seed", "workers", "max_steps", "horizon", "solver"}


class ConfigError(ValueError):
    pass


def _grid(v) -> GridShape:
    if isinstance(v, int):
        return GridShape(v, v)
    return GridShape.parse(str(v))


def _noise(v) -> tuple[float, float]:
    if isinstance(v, str):
        if v not in NOISE_PROFILES:
            raise ConfigError(f"unknown noise profile {v!r}; known: {sorted(NOISE_PROFILES)}")
        return NOISE_PROFILES[v]
    if isinstance(v, Mapping):
        return float(v["alpha"]), float(v["beta"])
    a, b = v
    return float(a), float(b)


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def spec_from_mapping(data: Mapping[str, Any]) -> SweepSpec:
    unknown = set(data) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw: dict[str, Any] = {}
    try:
        if "grids" in data:
            kw["grids"] = tuple(_grid(g) for g in _as_list(data["grids"]))
        if "agents" in data:
            kw["agents"] = tuple(int(n) for n in _as_list(data["agents"]))
        if "patterns" in data:
            kw["patterns"] = tuple(str(p) for p in _as_list(data["patterns"]))
        if "intervals" in data:
            kw["intervals"] = tuple(parse_interval(k) for k in _as_list(data["intervals"]))
        if "strategies" in data:
            kw["strategies"] = tuple(str(s) for s in _as_list(data["strategies"]))
        if "noise" in data:
            kw["noise"] = tuple(_noise(n) for n in _as_list(data["noise"]))
        for name in ("trials", "base_seed", "workers", "max_steps", "horizon"):
            if name in data:
                kw[name] = int(data[name])
        if data.get("solver"):
            s = dict(data["solver"])
            kw["solver"] = SolverParams(
                epsilon_floor=float(s.get("epsilon_floor", 1e-5)),
                max_iterations=int(s.get("max_iterations", 2000)),
                step_size=float(s.get("step_size", 0.1)),
                quantization_levels=None if s.get("quantization_levels") is None else int(s["quantization_levels"]),
            )
        return SweepSpec(**kw)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_spec(path, overrides: Mapping[str, Any] | None = None) -> SweepSpec:
    """Read a YAML sweep file; non-None ``overrides`` replace file values."""
    try:
        text = Path(path).read_text(encoding="utf-8")
        data = yaml.safe_load(text) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    data = dict(data)
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    return spec_from_mapping(data)
