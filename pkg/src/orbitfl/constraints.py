"""Battery and thermal bookkeeping for one satellite.

A linear battery (charging only while sunlit) and a single thermal node with
Newtonian cooling toward ``ambient_c``. Both updates are explicit Euler steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import InvalidInputError

SOC_THRESHOLD = 0.2
TEMPERATURE_LIMIT_C = 40.0

ACTIVITIES = ("Training", "Inference", "Exchanging", "Standby")


@dataclass(frozen=True)
class ResourceState:
    soc: float
    temperature_c: float

    def __post_init__(self):
        if not 0.0 <= self.soc <= 1.0:
            raise InvalidInputError(f"soc must be in [0, 1], got {self.soc}")
        if not math.isfinite(self.temperature_c):
            raise InvalidInputError("temperature_c must be finite")


def _default_power():
    return {"Training": 30.0, "Exchanging": 10.0, "Inference": 15.0, "Standby": 2.0}


def _default_heat():
    return {"Training": 0.02, "Exchanging": 0.005, "Inference": 0.005, "Standby": 0.005}


@dataclass(frozen=True)
class ResourceModel:
    battery_capacity_j: float = 162_000.0
    charge_rate_w: float = 10.0
    activity_power_w: dict[str, float] = field(default_factory=_default_power)
    activity_heat_c_per_s: dict[str, float] = field(default_factory=_default_heat)
    cooling_coeff_per_s: float = 0.0005
    ambient_c: float = 0.0

    def __post_init__(self):
        if not self.battery_capacity_j > 0:
            raise InvalidInputError("battery_capacity_j must be > 0")
        if self.charge_rate_w < 0 or self.cooling_coeff_per_s < 0:
            raise InvalidInputError("rates must be >= 0")
        for table in (self.activity_power_w, self.activity_heat_c_per_s):
            for name, value in table.items():
                if value < 0:
                    raise InvalidInputError(f"{name}: rate must be >= 0")

    def power(self, activity: str) -> float:
        try:
            return self.activity_power_w[activity]
        except KeyError:
            raise InvalidInputError(f"unknown activity {activity!r}") from None

    def heat(self, activity: str) -> float:
        try:
            return self.activity_heat_c_per_s[activity]
        except KeyError:
            raise InvalidInputError(f"unknown activity {activity!r}") from None


def update_power(state: ResourceState, model: ResourceModel, activity: str,
                 in_eclipse: bool, dt: float) -> ResourceState:
    if not dt > 0:
        raise InvalidInputError("dt must be > 0")
    draw = model.power(activity)
    charge = 0.0 if in_eclipse else model.charge_rate_w
    soc = state.soc + (charge - draw) * dt / model.battery_capacity_j
    return replace(state, soc=min(1.0, max(0.0, soc)))


def update_temperature(state: ResourceState, model: ResourceModel, activity: str,
                       dt: float) -> ResourceState:
    if not dt > 0:
        raise InvalidInputError("dt must be > 0")
    heating = model.heat(activity)
    dT = heating - model.cooling_coeff_per_s * (state.temperature_c - model.ambient_c)
    return replace(state, temperature_c=state.temperature_c + dT * dt)


def steady_state_temperature(model: ResourceModel, activity: str) -> float:
    if model.cooling_coeff_per_s == 0:
        return math.inf
    return model.ambient_c + model.heat(activity) / model.cooling_coeff_per_s


def permits_activity(state: ResourceState) -> bool:
    """Equality on either threshold still permits work."""
    return state.soc >= SOC_THRESHOLD and state.temperature_c <= TEMPERATURE_LIMIT_C
