from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Literal, get_args, get_origin, get_type_hints

from .errors import ParseError, SchemaError


OrientationStrategy = Literal["index_order", "ac_first", "dc_first"]
CrossCouplingSign = Literal["symmetric", "antisymmetric"]
DisturbanceModel = Literal["identity", "physical"]


def _check_choice(value: Any, choices: Any, path: str) -> None:
    allowed = get_args(choices)
    if value not in allowed:
        raise SchemaError(f"{path} must be one of {list(allowed)}, got {value!r}")


@dataclass
class ToleranceConfig:
    zero_block: float = 1e-12
    p22_relative: float = 1e-9
    jacobian: float = 1e-8
    riccati_residual: float = 1e-9
    pbh_rank: float = 1e-8
    current_guard: float = 1e-6
    divergence: float = 1e12
    eigenvalue_clearance: float = 1e-6


@dataclass
class OrientationConfig:
    strategy: OrientationStrategy = "index_order"
    vertex_bound: int = 20
    enumeration_edge_bound: int = 20

    def __post_init__(self) -> None:
        _check_choice(self.strategy, OrientationStrategy, "orientation.strategy")


@dataclass
class DqConfig:
    cross_coupling: CrossCouplingSign = "symmetric"
    samples: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        _check_choice(self.cross_coupling, CrossCouplingSign, "dq.cross_coupling")


@dataclass
class SynthesisConfig:
    newton_steps: int = 2
    max_states: int = 200
    disturbance: DisturbanceModel = "identity"

    def __post_init__(self) -> None:
        _check_choice(self.disturbance, DisturbanceModel, "synthesis.disturbance")


@dataclass
class SimConfig:
    dt: float = 1e-4
    horizon: float = 10.0
    method: Literal["rk4"] = "rk4"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise SchemaError(f"simulation.dt must be positive, got {self.dt}")
        if self.horizon < self.dt:
            raise SchemaError(f"simulation.horizon ({self.horizon}) must be at least dt ({self.dt})")
        _check_choice(self.method, Literal["rk4"], "simulation.method")


@dataclass
class PipelineConfig:
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    orientation: OrientationConfig = field(default_factory=OrientationConfig)
    dq: DqConfig = field(default_factory=DqConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    simulation: SimConfig = field(default_factory=SimConfig)


_SECTIONS = {
    "tolerances": ToleranceConfig,
    "orientation": OrientationConfig,
    "dq": DqConfig,
    "synthesis": SynthesisConfig,
    "simulation": SimConfig,
}


def load_config(config_path: str | Path | None = None, current_cfg: PipelineConfig | None = None) -> PipelineConfig:
    cfg = current_cfg or PipelineConfig()
    if config_path is None:
        return cfg

    path = Path(config_path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"Malformed config file {config_path}: {exc}") from exc
    return apply_overrides(cfg, payload)


def _typed_value(value: Any, hint: Any, path: str) -> Any:
    if get_origin(hint) is Literal:
        _check_choice(value, hint, path)
        return value
    numeric = isinstance(value, (int, float)) and not isinstance(value, bool)
    if hint is float and numeric:
        return float(value)
    if hint is int and numeric and isinstance(value, int):
        return value
    raise SchemaError(f"{path} must be {hint.__name__}, got {type(value).__name__}")


def apply_overrides(cfg: PipelineConfig, payload: Any) -> PipelineConfig:
    if not isinstance(payload, dict):
        raise SchemaError(f"Config must be a JSON object, got {type(payload).__name__}")
    for section, values in payload.items():
        if section not in _SECTIONS:
            raise SchemaError(f"Unknown config section: {section}")
        if not isinstance(values, dict):
            raise SchemaError(f"Config section {section} must be an object, got {type(values).__name__}")
        cls = _SECTIONS[section]
        hints = get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        updates = {}
        for key, value in values.items():
            if key not in known:
                raise SchemaError(f"Unknown config key: {section}.{key}")
            updates[key] = _typed_value(value, hints[key], f"{section}.{key}")
        # rebuilding the section re-runs its validation
        setattr(cfg, section, replace(getattr(cfg, section), **updates))
    return cfg
