"""Scenario configuration: JSON in, validated dataclasses out.

Every field has a default, so a scenario file only needs the values that
differ. Validation errors carry the dotted path of the offending field.
"""
from __future__ import annotations

import dataclasses
import json
import math
import types
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

from .constraints import ACTIVITIES
from .errors import ConfigError, InvalidInputError
from .orbit import R_EARTH, GeoRelay, GroundStation
from .protocol import DEFAULT_GROUND_STATIONS, DEFAULT_RELAY


@dataclass
class ConstellationConfig:
    count: int = 8
    altitude_km: float = 786.0
    inclination_deg: float = 98.6
    raan_deg: float = 0.0
    # None spaces the satellites evenly along one plane
    phase_offsets_deg: Optional[list[float]] = None

    def validate(self, path):
        if self.count < 1:
            raise ConfigError(f"{path}.count", "need at least one satellite")
        if not self.altitude_km > 0:
            raise ConfigError(f"{path}.altitude_km", f"altitude must be > 0 km, got {self.altitude_km}")
        if not 0.0 <= self.inclination_deg <= 180.0:
            raise ConfigError(f"{path}.inclination_deg", "must be in [0, 180]")
        if self.phase_offsets_deg is not None and len(self.phase_offsets_deg) != self.count:
            raise ConfigError(f"{path}.phase_offsets_deg", f"expected {self.count} entries")

    def phases(self) -> list[float]:
        if self.phase_offsets_deg is not None:
            return list(self.phase_offsets_deg)
        return [360.0 * k / self.count for k in range(self.count)]


@dataclass
class EndpointsConfig:
    ground_stations: list[GroundStation] = field(default_factory=lambda: list(DEFAULT_GROUND_STATIONS))
    relay: GeoRelay = DEFAULT_RELAY
    rate_bits_per_s: float = 1e7

    def validate(self, path):
        if not self.rate_bits_per_s > 0:
            raise ConfigError(f"{path}.rate_bits_per_s", "must be > 0")
        if not self.relay.radius_km > R_EARTH:
            raise ConfigError(f"{path}.relay.radius_km", "relay must orbit above the surface")


@dataclass
class ProtocolConfig:
    enabled: bool = True
    mixing_alpha: float = 0.5
    wire_size_bytes: int = 16_000_000
    min_exchange_interval_s: float = 300.0
    # which of exchange/inference wins when both are possible
    exchange_before_inference: bool = True

    def validate(self, path):
        if not 0.0 < self.mixing_alpha <= 1.0:
            raise ConfigError(f"{path}.mixing_alpha", "must be in (0, 1]")
        if self.wire_size_bytes <= 0:
            raise ConfigError(f"{path}.wire_size_bytes", "must be > 0")
        if self.min_exchange_interval_s < 0:
            raise ConfigError(f"{path}.min_exchange_interval_s", "must be >= 0")


@dataclass
class SiteConfig:
    name: str = "Ylitornio"
    latitude_deg: float = 66.32
    longitude_deg: float = 23.67
    min_elevation_deg: float = 60.0

    def validate(self, path):
        if abs(self.latitude_deg) > 90:
            raise ConfigError(f"{path}.latitude_deg", "|latitude| must be <= 90")
        if not 0.0 <= self.min_elevation_deg <= 90.0:
            raise ConfigError(f"{path}.min_elevation_deg", "must be in [0, 90]")


@dataclass
class ResourceConfig:
    battery_capacity_j: float = 162_000.0
    charge_rate_w: float = 10.0
    activity_power_w: dict[str, float] = field(default_factory=lambda: {
        "Training": 30.0, "Exchanging": 10.0, "Inference": 15.0, "Standby": 2.0})
    activity_heat_c_per_s: dict[str, float] = field(default_factory=lambda: {
        "Training": 0.02, "Exchanging": 0.005, "Inference": 0.005, "Standby": 0.005})
    cooling_coeff_per_s: float = 0.0005
    ambient_c: float = 0.0
    initial_soc: float = 1.0
    initial_temperature_c: float = 20.0
    # False turns off the standby rule (unconstrained runs)
    enforce: bool = True

    def validate(self, path):
        if not self.battery_capacity_j > 0:
            raise ConfigError(f"{path}.battery_capacity_j", "must be > 0")
        for name in ("charge_rate_w", "cooling_coeff_per_s"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{path}.{name}", "must be >= 0")
        for table in ("activity_power_w", "activity_heat_c_per_s"):
            values = getattr(self, table)
            missing = [a for a in ACTIVITIES if a not in values]
            if missing:
                raise ConfigError(f"{path}.{table}", f"missing activities {missing}")
            for k, v in values.items():
                if k not in ACTIVITIES:
                    raise ConfigError(f"{path}.{table}.{k}", "unknown activity")
                if v < 0:
                    raise ConfigError(f"{path}.{table}.{k}", "must be >= 0")
        if not 0.0 <= self.initial_soc <= 1.0:
            raise ConfigError(f"{path}.initial_soc", "must be in [0, 1]")


@dataclass
class TrainerSection:
    batch_size: int = 16
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    batch_time_s: float = 2.01

    def validate(self, path):
        if self.batch_size < 1:
            raise ConfigError(f"{path}.batch_size", "must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError(f"{path}.learning_rate", "must be > 0")
        if not self.batch_time_s > 0:
            raise ConfigError(f"{path}.batch_time_s", "must be > 0")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{path}.{name}", "must be in [0, 1)")


@dataclass
class DomainConfig:
    land: list[float] = field(default_factory=lambda: [0.08, 0.10, 0.30])
    water: list[float] = field(default_factory=lambda: [0.07, 0.11, 0.10])
    noise_std: float = 0.03
    brightness_jitter: float = 0.02
    edge_width: float = 0.08

    def validate(self, path):
        for name in ("land", "water"):
            if len(getattr(self, name)) != 3:
                raise ConfigError(f"{path}.{name}", "expected 3 band values")
        if self.noise_std < 0 or self.brightness_jitter < 0:
            raise ConfigError(f"{path}.noise_std", "must be >= 0")
        if not self.edge_width > 0:
            raise ConfigError(f"{path}.edge_width", "must be > 0")


@dataclass
class DataConfig:
    tile_size: int = 32
    tiles_per_shard: int = 230
    eval_tiles: int = 17
    eval_tile_size: int = 256
    shard_spread: float = 0.6
    pretrain_tiles: int = 64
    source_domain: DomainConfig = field(default_factory=lambda: DomainConfig(water=[0.07, 0.11, 0.14]))
    target_domain: DomainConfig = field(default_factory=DomainConfig)
    # explicit starting checkpoint; None fits one on the source domain
    initial_weights: Optional[list[float]] = None

    def validate(self, path):
        for name in ("tile_size", "eval_tile_size"):
            if getattr(self, name) < 4:
                raise ConfigError(f"{path}.{name}", "must be >= 4")
        if self.tiles_per_shard < 1:
            raise ConfigError(f"{path}.tiles_per_shard", "must be >= 1")
        if self.eval_tiles < 1:
            raise ConfigError(f"{path}.eval_tiles", "must be >= 1")
        if self.pretrain_tiles < 1:
            raise ConfigError(f"{path}.pretrain_tiles", "must be >= 1")
        if self.shard_spread < 0:
            raise ConfigError(f"{path}.shard_spread", "must be >= 0")
        if self.initial_weights is not None and len(self.initial_weights) != 6:
            raise ConfigError(f"{path}.initial_weights", "expected 6 values (5 weights + bias)")


@dataclass
class ScenarioConfig:
    scenario_id: int = 1
    name: str = ""
    duration_s: float = 86400.0
    dt_s: float = 10.0
    seed: int = 42
    sun_direction: list[float] = field(default_factory=lambda: [1.0, 0.0, 0.0])
    window_sample_s: float = 10.0
    constellation: ConstellationConfig = field(default_factory=ConstellationConfig)
    endpoints: EndpointsConfig = field(default_factory=EndpointsConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    disaster_site: Optional[SiteConfig] = field(default_factory=SiteConfig)
    resources: ResourceConfig = field(default_factory=ResourceConfig)
    trainer: TrainerSection = field(default_factory=TrainerSection)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self, path=""):
        if self.scenario_id not in (1, 2):
            raise ConfigError("scenario_id", f"unknown scenario {self.scenario_id}; expected 1 or 2")
        # zero-length runs are allowed: they produce empty artifacts
        if not self.duration_s >= 0:
            raise ConfigError("duration_s", "must be >= 0")
        if not self.dt_s > 0:
            raise ConfigError("dt_s", "must be > 0")
        if not self.window_sample_s > 0:
            raise ConfigError("window_sample_s", "must be > 0")
        if len(self.sun_direction) != 3:
            raise ConfigError("sun_direction", "expected 3 components")
        norm = math.sqrt(sum(c * c for c in self.sun_direction))
        if norm == 0:
            raise ConfigError("sun_direction", "must be nonzero")
        self.sun_direction = [c / norm for c in self.sun_direction]

    def to_dict(self) -> dict:
        return _to_plain(self)


# --- generic dict -> dataclass conversion ----------------------------------

def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    return obj


def _unwrap_optional(tp):
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0], True
    return tp, False


def _coerce(tp, value, path):
    tp, optional = _unwrap_optional(tp)
    if value is None:
        if optional:
            return None
        raise ConfigError(path, "must not be null")
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    origin = typing.get_origin(tp)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        (item_tp,) = typing.get_args(tp)
        return [_coerce(item_tp, v, f"{path}[{i}]") for i, v in enumerate(value)]
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected an object, got {type(value).__name__}")
        _, val_tp = typing.get_args(tp)
        return {str(k): _coerce(val_tp, v, f"{path}.{k}") for k, v in value.items()}
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(path, "must be finite")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return value


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", f"expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(where, "unknown field")
    kwargs = {}
    for name in names:
        if name in data:
            kwargs[name] = _coerce(hints[name], data[name], f"{path}.{name}" if path else name)
    try:
        obj = cls(**kwargs)
    except InvalidInputError as exc:
        raise ConfigError(path or "<root>", str(exc)) from None
    if hasattr(obj, "validate"):
        obj.validate(path)
    return obj


def config_from_dict(data: dict) -> ScenarioConfig:
    return _build(ScenarioConfig, data, "")


def bundled_scenario(name: str) -> Path:
    return Path(str(resources.files("orbitfl") / "scenarios" / name))


def resolve_scenario_path(path) -> Path:
    """Accept a filesystem path or the bare name of a bundled scenario."""
    p = Path(path)
    if p.exists():
        return p
    bundled = bundled_scenario(p.name)
    if bundled.exists():
        return bundled
    return p


def load_config(path) -> ScenarioConfig:
    p = resolve_scenario_path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise ConfigError("<file>", f"no such file: {path}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"malformed JSON: {exc}") from None
    return config_from_dict(data)


def validate_config(path) -> ScenarioConfig:
    return load_config(path)
