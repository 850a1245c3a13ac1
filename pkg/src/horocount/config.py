"""Experiment configuration (TOML or JSON) as nested dataclasses."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


class ConfigError(ValueError):
    code = "E_CONFIG"


class ConfigNotFound(ConfigError):
    code = "E_CONFIG_NOT_FOUND"


@dataclass
class GroupConfig:
    path: str = ""
    # used when no path is given: certified orthogonal-axes Schottky group
    n: int = 2
    rank: int = 2
    length: float = 4.0


@dataclass
class BasepointConfig:
    generator: int | None = 0
    matrix: list | None = None


@dataclass
class DeltaConfig:
    Rmax: float = 24.0


@dataclass
class AtomConfig:
    s: str | float = "auto"  # "auto" = delta + 0.1
    R: float = 28.0


@dataclass
class PhiConfig:
    rho1: float = 0.25
    rho2: float = 4.0
    center: str | list = "basepoint_minus"
    radius: float = 1.5


@dataclass
class SweepConfig:
    Tmin: float = 1e2
    Tmax: float = 1e6
    points: int = 41
    normalization: str = "roblin"  # or "unit"


@dataclass
class AuditConfig:
    rho1: float = 1e-3
    rho2: float = 1e3
    center: str | list | None = None
    radius: float | None = None
    Tmin: float = 10.0
    Tmax: float = 1e6
    points: int = 21


@dataclass
class LedrappierConfig:
    X: list = field(default_factory=lambda: [1.0, 0.0])
    T: list = field(default_factory=lambda: [1000, 3000, 10000])
    bumps: list = field(default_factory=lambda: [{"center": [600.0, 0.0], "radius": 250.0}, {"center": [0.0, 900.0], "radius": 300.0}])


@dataclass
class ExperimentConfig:
    seed: int = 0
    threads: int = 1
    output_dir: str = "out"
    group: GroupConfig = field(default_factory=GroupConfig)
    basepoint: BasepointConfig = field(default_factory=BasepointConfig)
    delta: DeltaConfig = field(default_factory=DeltaConfig)
    atoms: AtomConfig = field(default_factory=AtomConfig)
    phi: PhiConfig = field(default_factory=PhiConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)
    ledrappier: LedrappierConfig = field(default_factory=LedrappierConfig)
    base_dir: str = "."

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q


def _build(cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"section for {cls.__name__} must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        default = known[k].default_factory() if callable(known[k].default_factory) else known[k].default
        kwargs[k] = _build(type(default), v) if is_dataclass(default) else v
    return cls(**kwargs)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigNotFound(f"config file not found: {p}")
    text = p.read_text()
    try:
        data = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    cfg = _build(ExperimentConfig, data)
    cfg.base_dir = str(p.parent)
    return cfg
