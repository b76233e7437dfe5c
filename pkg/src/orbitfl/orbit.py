"""Circular two-body geometry for the constellation.

Positions are kilometres in an Earth-centred inertial (ECI) frame whose
x-axis coincides with the Greenwich meridian at t = 0. Everything here is a
pure function of its arguments; most functions also accept stacked inputs
(shape ``(..., 3)`` for vectors, arrays of times) so the engine can
precompute whole trajectories in one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .errors import InvalidInputError

MU_EARTH = 398600.4418  # km^3/s^2
R_EARTH = 6371.0  # km, mean radius
OMEGA_EARTH = 7.2921159e-5  # rad/s, sidereal rotation rate
GEO_RADIUS = 42164.0  # km
SECONDS_PER_DAY = 86400.0

Vec3 = np.ndarray


@dataclass(frozen=True)
class OrbitalElements:
    """Circular orbit: eccentricity is fixed at zero."""

    semi_major_axis_km: float
    inclination_deg: float
    raan_deg: float = 0.0
    phase_deg: float = 0.0

    def __post_init__(self):
        if not self.semi_major_axis_km > R_EARTH:
            raise InvalidInputError(
                f"semi_major_axis_km must exceed {R_EARTH} km, got {self.semi_major_axis_km}")
        if not 0.0 <= self.inclination_deg <= 180.0:
            raise InvalidInputError(f"inclination_deg must be in [0, 180], got {self.inclination_deg}")

    @classmethod
    def from_altitude(cls, altitude_km: float, inclination_deg: float,
                      raan_deg: float = 0.0, phase_deg: float = 0.0) -> "OrbitalElements":
        return cls(R_EARTH + altitude_km, inclination_deg, raan_deg, phase_deg)

    @property
    def period_s(self) -> float:
        return orbital_period(self.semi_major_axis_km)


@dataclass(frozen=True)
class GroundStation:
    name: str
    latitude_deg: float
    longitude_deg: float
    min_elevation_deg: float = 5.0

    def __post_init__(self):
        if abs(self.latitude_deg) > 90.0:
            raise InvalidInputError(f"{self.name}: |latitude_deg| must be <= 90")
        if not 0.0 <= self.min_elevation_deg < 90.0:
            raise InvalidInputError(f"{self.name}: min_elevation_deg must be in [0, 90)")

    @property
    def id(self) -> str:
        return self.name

    def position(self, t):
        return ground_station_position(self, t)

    def visible(self, sat_pos, t) -> np.ndarray:
        return elevation_deg(sat_pos, self.position(t)) >= self.min_elevation_deg


@dataclass(frozen=True)
class GeoRelay:
    """A geostationary relay parked over ``longitude_deg``."""

    name: str = "EDRS"
    longitude_deg: float = 9.0
    radius_km: float = GEO_RADIUS

    @property
    def id(self) -> str:
        return self.name

    def position(self, t):
        return _rotating_point(self.radius_km, 0.0, self.longitude_deg, t)

    def visible(self, sat_pos, t) -> np.ndarray:
        return has_line_of_sight(sat_pos, self.position(t))


@dataclass(frozen=True)
class ContactWindow:
    endpoint_id: str
    t_start: float
    t_end: float

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise InvalidInputError(f"empty window [{self.t_start}, {self.t_end}]")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def contains(self, t: float) -> bool:
        return self.t_start <= t < self.t_end


class Endpoint(Protocol):
    @property
    def id(self) -> str: ...

    def visible(self, sat_pos: np.ndarray, t: np.ndarray) -> np.ndarray: ...


def orbital_period(semi_major_axis_km: float) -> float:
    """Keplerian period in seconds, ``2*pi*sqrt(a^3/mu)``."""
    a = float(semi_major_axis_km)
    if not a > R_EARTH:
        raise InvalidInputError(f"semi-major axis must exceed {R_EARTH} km, got {a}")
    return 2.0 * math.pi * math.sqrt(a ** 3 / MU_EARTH)


def orbits_per_day(semi_major_axis_km: float) -> float:
    return SECONDS_PER_DAY / orbital_period(semi_major_axis_km)


def propagate(elements: OrbitalElements, t) -> np.ndarray:
    """ECI position at time(s) ``t``; returns shape ``(3,)`` or ``(len(t), 3)``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise InvalidInputError("t must be >= 0")
    a = elements.semi_major_axis_km
    # wrap whole revolutions first so t = k*period lands back on the epoch point
    frac = np.mod(t_arr / elements.period_s, 1.0)
    u = math.radians(elements.phase_deg) + 2.0 * math.pi * frac
    inc = math.radians(elements.inclination_deg)
    raan = math.radians(elements.raan_deg)

    xp = a * np.cos(u)
    yp = a * np.sin(u)
    # R_z(raan) @ R_x(inc) @ [xp, yp, 0]
    ci, si = math.cos(inc), math.sin(inc)
    cO, sO = math.cos(raan), math.sin(raan)
    y1 = yp * ci
    z = yp * si
    x = cO * xp - sO * y1
    y = sO * xp + cO * y1
    return np.stack([x, y, z], axis=-1)


def _rotating_point(radius: float, lat_deg: float, lon_deg: float, t) -> np.ndarray:
    t_arr = np.asarray(t, dtype=float)
    lat = math.radians(lat_deg)
    theta = math.radians(lon_deg) + OMEGA_EARTH * t_arr
    r_xy = radius * math.cos(lat)
    z = np.broadcast_to(radius * math.sin(lat), np.shape(theta))
    return np.stack([r_xy * np.cos(theta), r_xy * np.sin(theta), z], axis=-1)


def ground_station_position(station: GroundStation, t) -> np.ndarray:
    """Station position on the spherical Earth, rotating at the sidereal rate."""
    if np.any(np.asarray(t) < 0):
        raise InvalidInputError("t must be >= 0")
    return _rotating_point(R_EARTH, station.latitude_deg, station.longitude_deg, t)


def is_eclipsed(sat, sun_dir) -> np.ndarray | bool:
    """Cylindrical Earth shadow test."""
    sat = np.asarray(sat, dtype=float)
    sun_dir = np.asarray(sun_dir, dtype=float)
    if abs(np.linalg.norm(sun_dir) - 1.0) > 1e-9:
        raise InvalidInputError("sun_dir must be a unit vector")
    along = sat @ sun_dir
    perp = sat - along[..., None] * sun_dir if sat.ndim > 1 else sat - along * sun_dir
    result = (along < 0.0) & (np.linalg.norm(perp, axis=-1) < R_EARTH)
    return bool(result) if np.ndim(result) == 0 else result


def elevation_deg(sat, station_pos) -> np.ndarray | float:
    """Elevation of ``sat`` above the local horizon at ``station_pos``."""
    sat = np.asarray(sat, dtype=float)
    station_pos = np.asarray(station_pos, dtype=float)
    st_norm = np.linalg.norm(station_pos, axis=-1)
    if np.any(np.abs(st_norm - R_EARTH) > 1e-3):
        raise InvalidInputError("station_pos must lie on the Earth's surface")
    rel = sat - station_pos
    rel_norm = np.linalg.norm(rel, axis=-1)
    if np.any(rel_norm == 0.0):
        raise InvalidInputError("satellite coincides with station")
    sin_el = np.sum(rel * station_pos, axis=-1) / (rel_norm * st_norm)
    el = np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))
    return float(el) if np.ndim(el) == 0 else el


def has_line_of_sight(a, b) -> np.ndarray | bool:
    """True where the segment a-b clears the Earth sphere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    dd = np.sum(d * d, axis=-1)
    # parameter of closest approach to the origin, clamped to the segment
    s = np.where(dd > 0, -np.sum(a * d, axis=-1) / np.where(dd > 0, dd, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    closest = a + s[..., None] * d if d.ndim > 1 else a + s * d
    result = np.linalg.norm(closest, axis=-1) >= R_EARTH
    return bool(result) if np.ndim(result) == 0 else result


def windows_from_predicate(predicate: Callable[[np.ndarray], np.ndarray], endpoint_id: str,
                           t0: float, t1: float, dt_sample: float = 10.0,
                           tol: float = 0.1) -> list[ContactWindow]:
    """Sample ``predicate`` on a grid and turn each run of true samples into a window.

    ``predicate`` maps an array of times to a boolean array. Interior window
    edges are bisected down to ``tol`` seconds; the returned start is the
    first known-true time and the end is the first known-false time.
    """
    if not t0 < t1:
        return []
    if dt_sample <= 0:
        raise InvalidInputError("dt_sample must be > 0")
    n = int(math.floor((t1 - t0) / dt_sample))
    times = t0 + dt_sample * np.arange(n + 1)
    if times[-1] < t1:
        times = np.append(times, t1)
    flags = np.asarray(predicate(times), dtype=bool)

    def bisect(lo: float, hi: float, lo_val: bool) -> tuple[float, float]:
        # invariant: predicate(lo) == lo_val, predicate(hi) != lo_val
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if bool(predicate(np.array([mid]))[0]) == lo_val:
                lo = mid
            else:
                hi = mid
        return lo, hi

    windows = []
    edges = np.flatnonzero(np.diff(flags.astype(np.int8)))
    starts = ([0] if flags[0] else []) + [i + 1 for i in edges if not flags[i]]
    ends = [i for i in edges if flags[i]] + ([len(flags) - 1] if flags[-1] else [])
    for i_start, i_end in zip(starts, ends):
        if i_start == 0:
            t_start = float(times[0])
        else:
            _, t_start = bisect(float(times[i_start - 1]), float(times[i_start]), False)
        if i_end == len(flags) - 1:
            t_end = float(times[-1])
        else:
            _, t_end = bisect(float(times[i_end]), float(times[i_end + 1]), True)
        if t_start < t_end:
            windows.append(ContactWindow(endpoint_id, t_start, t_end))
    return windows


def contact_windows(trajectory: Callable[[np.ndarray], np.ndarray], endpoint: Endpoint,
                    t0: float, t1: float, dt_sample: float = 10.0,
                    tol: float = 0.1) -> list[ContactWindow]:
    """Visibility windows between a satellite trajectory and an endpoint.

    ``trajectory`` maps an array of times to ``(n, 3)`` ECI positions, e.g.
    ``functools.partial(propagate, elements)``.
    """
    def predicate(times):
        return endpoint.visible(trajectory(times), times)

    return windows_from_predicate(predicate, endpoint.id, t0, t1, dt_sample, tol)


def eclipse_fraction_analytic(radius_km: float) -> float:
    """Shadowed fraction of a circular orbit whose plane contains the Sun line."""
    return math.asin(R_EARTH / radius_km) / math.pi
