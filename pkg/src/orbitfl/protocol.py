"""Model exchange over intermittent links.

An exchange is upload, merge on the server, download, all at one link rate.
Nothing is committed until the download finishes: an exchange cut short by
the end of its window leaves both sides untouched.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigError, InvalidInputError
from .learner import AdamState, ModelParams
from .orbit import ContactWindow, GeoRelay, GroundStation

DEFAULT_RATE = 1e7  # bit/s

GROUND_STATION = "ground_station"
RELAY = "relay"

DEFAULT_GROUND_STATIONS = (
    GroundStation("Matera", 40.65, 16.70, 5.0),
    GroundStation("Svalbard", 78.23, 15.41, 5.0),
    GroundStation("Maspalomas", 27.76, -15.63, 5.0),
)
DEFAULT_RELAY = GeoRelay("EDRS", 9.0)


@dataclass(frozen=True)
class LinkEndpoint:
    id: str
    kind: str
    rate_bits_per_s: float = DEFAULT_RATE
    site: Any = None  # GroundStation or GeoRelay providing visibility

    def __post_init__(self):
        if self.kind not in (GROUND_STATION, RELAY):
            raise InvalidInputError(f"unknown endpoint kind {self.kind!r}")
        if not self.rate_bits_per_s > 0:
            raise InvalidInputError("rate_bits_per_s must be > 0")

    def visible(self, sat_pos, t):
        return self.site.visible(sat_pos, t)


@dataclass
class ServerState:
    global_params: ModelParams
    contact_count: int = 0
    mixing_alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.mixing_alpha <= 1.0:
            raise InvalidInputError("mixing_alpha must be in (0, 1]")


@dataclass
class TransferJob:
    sat_id: int
    direction: str  # "upload" | "download"
    bytes_total: float
    bytes_done: float = 0.0
    window_id: str = ""

    @property
    def done(self) -> bool:
        return self.bytes_done >= self.bytes_total

    def advance(self, seconds: float, rate_bits_per_s: float) -> float:
        """Move up to ``seconds`` of link time; return the unused remainder."""
        need = transfer_duration(self.bytes_total - self.bytes_done, rate_bits_per_s)
        if seconds >= need:
            self.bytes_done = self.bytes_total
            return seconds - need
        self.bytes_done += seconds * rate_bits_per_s / 8.0
        return 0.0


@dataclass(frozen=True)
class ExchangeRecord:
    t: float
    sat_id: int
    endpoint_id: str
    outcome: str  # "completed" | "aborted"


@dataclass
class Exchange:
    """An in-flight upload/merge/download cycle for one satellite."""

    sat_id: int
    endpoint: LinkEndpoint
    window: ContactWindow
    t_start: float
    wire_size_bytes: int
    upload: TransferJob = field(init=False)
    download: TransferJob = field(init=False)
    clock: float = field(init=False)

    def __post_init__(self):
        wid = f"{self.window.endpoint_id}@{self.window.t_start:.1f}"
        self.upload = TransferJob(self.sat_id, "upload", self.wire_size_bytes, window_id=wid)
        self.download = TransferJob(self.sat_id, "download", self.wire_size_bytes, window_id=wid)
        self.clock = self.t_start

    @property
    def finished(self) -> bool:
        return self.download.done

    def advance(self, until: float) -> bool:
        """Run the link up to ``until`` (clipped at the window end); True once complete."""
        until = min(until, self.window.t_end)
        budget = max(0.0, until - self.clock)
        rate = self.endpoint.rate_bits_per_s
        for job in (self.upload, self.download):
            if not job.done:
                before = budget
                budget = job.advance(budget, rate)
                self.clock += before - budget
        if not self.finished:
            self.clock = until
        return self.finished

    @property
    def window_closed(self) -> bool:
        return not self.finished and self.clock >= self.window.t_end


def transfer_duration(n_bytes: float, rate_bits_per_s: float) -> float:
    if not rate_bits_per_s > 0:
        raise InvalidInputError("rate must be > 0")
    if n_bytes < 0:
        raise InvalidInputError("bytes must be >= 0")
    return n_bytes * 8.0 / rate_bits_per_s


def aggregate(server: ServerState, incoming: ModelParams) -> ServerState:
    """Exponential mixing of an uploaded model into the global one."""
    g = server.global_params
    if incoming.weights.shape != g.weights.shape:
        raise InvalidInputError(f"shape mismatch {incoming.weights.shape} vs {g.weights.shape}")
    alpha = server.mixing_alpha
    if alpha == 1.0:
        merged = incoming.weights.copy()
    else:
        merged = (1.0 - alpha) * g.weights + alpha * incoming.weights
    return ServerState(ModelParams(merged, g.version + 1, g.wire_size_bytes),
                       server.contact_count + 1, alpha)


def wants_exchange(sat) -> bool:
    """Only a model that trained since its last exchange is worth sending."""
    return sat.params.version > sat.last_exchange_version


def commit_exchange(sat, server: ServerState) -> ServerState:
    """Merge ``sat``'s model into ``server`` and hand the result back.

    ``sat`` needs ``params``, ``adam`` and ``last_exchange_version``
    attributes; it gets the merged weights, fresh Adam moments and a bumped
    version.
    """
    new_server = aggregate(server, sat.params)
    version = sat.params.version + 1
    sat.params = ModelParams(new_server.global_params.weights.copy(), version,
                             sat.params.wire_size_bytes)
    sat.adam = AdamState.fresh(len(sat.params.weights))
    sat.last_exchange_version = version
    return new_server


def run_exchange(sat, server: ServerState, endpoint: LinkEndpoint, window: ContactWindow,
                 t_now: float) -> tuple[ExchangeRecord | None, ServerState]:
    """Attempt a full exchange starting at ``t_now`` inside ``window``.

    Returns ``(None, server)`` when the satellite has nothing new to send.
    On completion the satellite holds the merged model; if the window closes
    first the record is ``aborted`` and neither side changes.
    """
    if not window.contains(t_now):
        raise InvalidInputError(f"t_now={t_now} is outside {window}")
    if not wants_exchange(sat):
        return None, server
    ex = Exchange(sat.sat_id, endpoint, window, t_now, wire_size_bytes=sat.params.wire_size_bytes)
    if ex.advance(window.t_end):
        server = commit_exchange(sat, server)
        return ExchangeRecord(ex.clock, sat.sat_id, endpoint.id, "completed"), server
    return ExchangeRecord(window.t_end, sat.sat_id, endpoint.id, "aborted"), server


def endpoint_set(scenario_id: int, ground_stations=DEFAULT_GROUND_STATIONS,
                 relay: GeoRelay = DEFAULT_RELAY, rate_bits_per_s: float = DEFAULT_RATE
                 ) -> list[LinkEndpoint]:
    """Scenario 1 talks to three ground stations, scenario 2 to one relay."""
    if scenario_id == 1:
        return [LinkEndpoint(gs.name, GROUND_STATION, rate_bits_per_s, gs) for gs in ground_stations]
    if scenario_id == 2:
        return [LinkEndpoint(relay.name, RELAY, rate_bits_per_s, relay)]
    raise ConfigError("scenario_id", f"unknown scenario {scenario_id!r}; expected 1 or 2")


def server_key(endpoint: LinkEndpoint) -> str:
    return "ground" if endpoint.kind == GROUND_STATION else endpoint.id


def build_servers(endpoints: list[LinkEndpoint], initial: ModelParams,
                  mixing_alpha: float) -> dict[str, ServerState]:
    servers: dict[str, ServerState] = {}
    for e in endpoints:
        key = server_key(e)
        if key not in servers:
            servers[key] = ServerState(initial.copy(), 0, mixing_alpha)
    return servers


def max_norm_distance(p: ModelParams, q: ModelParams) -> float:
    return float(np.max(np.abs(p.weights - q.weights)))
