"""Fixed-timestep constellation loop.

Each step every satellite (in sat_id order) picks one activity, does the
work for it, and pays its power and heat cost. Training time is tracked
exactly with rational arithmetic so that batch counts never drift.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Optional

import numpy as np

from . import learner
from .config import ScenarioConfig
from .constraints import ResourceModel, ResourceState, permits_activity, update_power, update_temperature
from .learner import AdamState, EvalCache, ModelParams, TileDomain, TrainerConfig
from .orbit import (ContactWindow, GroundStation, OrbitalElements, R_EARTH, contact_windows,
                    elevation_deg, ground_station_position, is_eclipsed, propagate)
from .protocol import (Exchange, LinkEndpoint, ServerState, build_servers, commit_exchange,
                       endpoint_set, server_key, wants_exchange)

EVAL_SHARD = 10_000
PRETRAIN_SHARD = 10_001


class Activity(str, enum.Enum):
    TRAINING = "Training"
    INFERENCE = "Inference"
    EXCHANGING = "Exchanging"
    STANDBY = "Standby"


@dataclass
class AgentState:
    sat_id: int
    elements: OrbitalElements
    resources: ResourceState
    params: ModelParams
    adam: AdamState
    shard_X: np.ndarray  # (tiles, pixels, features+1)
    shard_y: np.ndarray  # (tiles, pixels)
    batch_time_s: Fraction = Fraction(201, 100)
    train_accumulator_s: Fraction = Fraction(0)
    last_exchange_version: int = 0
    last_exchange_t: float = -math.inf
    exchange: Optional[Exchange] = None
    rng: np.random.Generator = field(default=None, repr=False)
    order: np.ndarray = field(default=None, repr=False)
    cursor: int = 0
    batches_done: int = 0
    samples_seen: int = 0
    tiles_seen: set = field(default_factory=set, repr=False)

    def next_batch_indices(self, batch_size: int) -> np.ndarray:
        """Next ``batch_size`` shard indices, reshuffling at every epoch boundary."""
        n = len(self.shard_y)
        out = []
        while len(out) < batch_size:
            if self.order is None or self.cursor >= n:
                self.order = self.rng.permutation(n)
                self.cursor = 0
            take = min(batch_size - len(out), n - self.cursor)
            out.extend(self.order[self.cursor:self.cursor + take])
            self.cursor += take
        return np.asarray(out)


@dataclass
class EventRecord:
    t: float
    sat_id: int
    activity: str
    soc: float
    temperature_c: float
    in_eclipse: bool
    batches: int = 0
    train_loss: Optional[float] = None
    eval_iou: Optional[float] = None
    eval_loss: Optional[float] = None
    exchange: Optional[dict] = None
    params_version: int = 0

    def to_json(self) -> dict:
        return {
            "event": "step", "t": self.t, "sat_id": self.sat_id, "activity": self.activity,
            "soc": self.soc, "temperature_c": self.temperature_c, "in_eclipse": self.in_eclipse,
            "batches": self.batches, "train_loss": self.train_loss, "eval_iou": self.eval_iou,
            "eval_loss": self.eval_loss, "exchange": self.exchange,
            "params_version": self.params_version,
        }


@dataclass
class World:
    config: ScenarioConfig
    agents: list[AgentState]
    endpoints: list[LinkEndpoint]
    servers: dict[str, ServerState]
    resource_model: ResourceModel
    trainer: TrainerConfig
    eval_cache: EvalCache
    initial_params: ModelParams
    sun_dir: np.ndarray
    windows: list[list[tuple[ContactWindow, LinkEndpoint]]]
    # per (sat, step) flags sampled at step start
    eclipse: np.ndarray
    over_site: np.ndarray
    t: float = 0.0
    step_index: int = 0
    events: list[dict] = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return self.eclipse.shape[1]


def _domain(cfg) -> TileDomain:
    return TileDomain(land=tuple(cfg.land), water=tuple(cfg.water), noise_std=cfg.noise_std,
                      brightness_jitter=cfg.brightness_jitter, edge_width=cfg.edge_width)


def satellite_elements(config: ScenarioConfig) -> list[OrbitalElements]:
    c = config.constellation
    return [OrbitalElements.from_altitude(c.altitude_km, c.inclination_deg, c.raan_deg, ph)
            for ph in c.phases()]


def scenario_endpoints(config: ScenarioConfig) -> list[LinkEndpoint]:
    e = config.endpoints
    return endpoint_set(config.scenario_id, e.ground_stations, e.relay, e.rate_bits_per_s)


def step_times(config: ScenarioConfig) -> np.ndarray:
    n = int(math.floor(config.duration_s / config.dt_s + 1e-9))
    return config.dt_s * np.arange(n)


def site_station(config: ScenarioConfig) -> Optional[GroundStation]:
    s = config.disaster_site
    if s is None:
        return None
    # elevation threshold may be 90 for the site, which GroundStation forbids
    return GroundStation(s.name, s.latitude_deg, s.longitude_deg, 0.0)


def overpass_events(config: ScenarioConfig, times: Optional[np.ndarray] = None) -> list[tuple[int, float]]:
    """(sat_id, t) for every sample time a satellite sees the disaster site above threshold."""
    station = site_station(config)
    if station is None:
        return []
    times = step_times(config) if times is None else np.asarray(times, dtype=float)
    if len(times) == 0:
        return []
    site = ground_station_position(station, times)
    out = []
    for sat_id, el in enumerate(satellite_elements(config)):
        elev = elevation_deg(propagate(el, times), site)
        out.extend((sat_id, float(t)) for t in times[elev >= config.disaster_site.min_elevation_deg])
    return sorted(out, key=lambda p: (p[1], p[0]))


def initial_params(config: ScenarioConfig) -> ModelParams:
    d = config.data
    wire = config.protocol.wire_size_bytes
    if d.initial_weights is not None:
        return ModelParams(np.array(d.initial_weights, dtype=float), 0, wire)
    tiles = learner.generate_tiles(config.seed, d.pretrain_tiles, PRETRAIN_SHARD, d.tile_size,
                                   _domain(d.source_domain))
    return learner.pretrain(tiles, wire)


def eval_set(config: ScenarioConfig) -> list:
    d = config.data
    return learner.generate_tiles(config.seed, d.eval_tiles, EVAL_SHARD, d.eval_tile_size,
                                  _domain(d.target_domain))


def shard_tiles(config: ScenarioConfig, sat_id: int) -> list:
    d = config.data
    dom = learner.shard_domain(_domain(d.target_domain), config.seed, sat_id, d.shard_spread)
    return learner.generate_tiles(config.seed, d.tiles_per_shard, sat_id, d.tile_size, dom)


def build_world(config: ScenarioConfig) -> World:
    r = config.resources
    model = ResourceModel(r.battery_capacity_j, r.charge_rate_w, dict(r.activity_power_w),
                          dict(r.activity_heat_c_per_s), r.cooling_coeff_per_s, r.ambient_c)
    tr = config.trainer
    trainer = TrainerConfig(tr.batch_size, tr.learning_rate, tr.beta1, tr.beta2, tr.eps_adam)
    init = initial_params(config)
    times = step_times(config)
    sun = np.asarray(config.sun_direction, dtype=float)
    elements = satellite_elements(config)
    endpoints = scenario_endpoints(config) if config.protocol.enabled else []
    station = site_station(config)
    site_pos = ground_station_position(station, times) if station is not None and len(times) else None

    agents, windows = [], []
    eclipse = np.zeros((len(elements), len(times)), dtype=bool)
    over_site = np.zeros_like(eclipse)
    for sat_id, el in enumerate(elements):
        tiles = shard_tiles(config, sat_id)
        X = np.stack([learner.tile_features(t) for t in tiles])
        y = np.stack([t.mask.ravel().astype(float) for t in tiles])
        agents.append(AgentState(
            sat_id=sat_id, elements=el,
            resources=ResourceState(r.initial_soc, r.initial_temperature_c),
            params=init.copy(), adam=AdamState.fresh(len(init.weights)),
            shard_X=X, shard_y=y,
            batch_time_s=Fraction(str(tr.batch_time_s)),
            rng=np.random.default_rng(np.random.SeedSequence([config.seed, sat_id, 0xBA7C])),
        ))
        if len(times):
            pos = propagate(el, times)
            eclipse[sat_id] = is_eclipsed(pos, sun)
            if site_pos is not None:
                over_site[sat_id] = elevation_deg(pos, site_pos) >= config.disaster_site.min_elevation_deg
        sat_windows = []
        if config.duration_s > 0:
            for ep in endpoints:
                for w in contact_windows(partial(propagate, el), ep, 0.0, config.duration_s,
                                         config.window_sample_s):
                    sat_windows.append((w, ep))
        sat_windows.sort(key=lambda we: (we[0].t_start, we[0].endpoint_id))
        windows.append(sat_windows)

    return World(
        config=config, agents=agents, endpoints=endpoints,
        servers=build_servers(endpoints, init, config.protocol.mixing_alpha),
        resource_model=model, trainer=trainer, eval_cache=EvalCache.build(eval_set(config)),
        initial_params=init, sun_dir=sun, windows=windows, eclipse=eclipse, over_site=over_site,
    )


def _open_window(world: World, agent: AgentState, t: float):
    """The visible window with the most time left, if any."""
    best = None
    for w, ep in world.windows[agent.sat_id]:
        if w.t_start > t:
            break
        if w.contains(t) and (best is None or w.t_end > best[0].t_end):
            best = (w, ep)
    return best


def _permits(world: World, agent: AgentState) -> bool:
    return permits_activity(agent.resources) or not world.config.resources.enforce


def _can_exchange(world: World, agent: AgentState, t: float) -> bool:
    p = world.config.protocol
    return (bool(world.endpoints) and wants_exchange(agent)
            and t - agent.last_exchange_t >= p.min_exchange_interval_s
            and _open_window(world, agent, t) is not None)


def choose_activity(agent: AgentState, world: World, t: float) -> Activity:
    """Standby if constrained, else exchange, inference or training in priority order."""
    if not _permits(world, agent):
        return Activity.STANDBY
    if agent.exchange is not None:
        return Activity.EXCHANGING
    exchange_ok = _can_exchange(world, agent, t)
    overhead = bool(world.over_site[agent.sat_id, world.step_index])
    if world.config.protocol.exchange_before_inference:
        order = ((exchange_ok, Activity.EXCHANGING), (overhead, Activity.INFERENCE))
    else:
        order = ((overhead, Activity.INFERENCE), (exchange_ok, Activity.EXCHANGING))
    for ok, activity in order:
        if ok:
            return activity
    return Activity.TRAINING


def _train(world: World, agent: AgentState, dt: float) -> tuple[int, Optional[float]]:
    agent.train_accumulator_s += Fraction(dt)
    n = int(agent.train_accumulator_s // agent.batch_time_s)
    agent.train_accumulator_s -= n * agent.batch_time_s
    losses = []
    bs = world.trainer.batch_size
    n_feat = agent.shard_X.shape[-1]
    for _ in range(n):
        idx = agent.next_batch_indices(bs)
        X = agent.shard_X[idx].reshape(-1, n_feat)
        y = agent.shard_y[idx].ravel()
        loss, grad = learner.loss_and_gradient(agent.params.weights, X, y)
        agent.params, agent.adam = learner.adam_step(agent.params, agent.adam, grad, world.trainer)
        losses.append(loss)
        agent.tiles_seen.update(int(i) for i in idx)
        agent.samples_seen += len(idx)
    agent.batches_done += n
    return n, (float(np.mean(losses)) if losses else None)


def _exchange_step(world: World, agent: AgentState, t: float, dt: float) -> dict:
    ex = agent.exchange
    if ex is None:
        w, ep = _open_window(world, agent, t)
        ex = agent.exchange = Exchange(agent.sat_id, ep, w, t, agent.params.wire_size_bytes)
    ep = ex.endpoint
    info = {"endpoint": ep.id, "kind": ep.kind}
    if ex.advance(t + dt):
        key = server_key(ep)
        world.servers[key] = commit_exchange(agent, world.servers[key])
        agent.last_exchange_t = ex.clock
        agent.exchange = None
        info.update(outcome="completed", t_done=ex.clock)
    elif ex.window_closed:
        agent.exchange = None
        info.update(outcome="aborted", t_done=ex.window.t_end)
    else:
        info.update(outcome="in_progress")
    return info


def step(world: World, dt: Optional[float] = None) -> World:
    dt = world.config.dt_s if dt is None else dt
    if not dt > 0:
        raise ValueError("dt must be > 0")
    t = world.t
    k = world.step_index
    for agent in world.agents:
        start = agent.resources
        eclipsed = bool(world.eclipse[agent.sat_id, k])
        activity = choose_activity(agent, world, t)
        rec = EventRecord(t, agent.sat_id, activity.value, start.soc, start.temperature_c, eclipsed)
        if activity is Activity.STANDBY and agent.exchange is not None:
            # power or heat cut the link: nothing is committed
            ex = agent.exchange
            agent.exchange = None
            rec.exchange = {"endpoint": ex.endpoint.id, "kind": ex.endpoint.kind,
                            "outcome": "aborted", "t_done": t}
        elif activity is Activity.TRAINING:
            rec.batches, rec.train_loss = _train(world, agent, dt)
        elif activity is Activity.EXCHANGING:
            rec.exchange = _exchange_step(world, agent, t, dt)
        elif activity is Activity.INFERENCE:
            rec.eval_iou, rec.eval_loss = world.eval_cache.evaluate(agent.params)
        res = update_power(start, world.resource_model, activity.value, eclipsed, dt)
        agent.resources = update_temperature(res, world.resource_model, activity.value, dt)
        rec.params_version = agent.params.version
        world.events.append(rec.to_json())
    world.t = t + dt
    world.step_index = k + 1
    return world


def run(config: ScenarioConfig) -> World:
    """Simulate the whole scenario; ``world.events`` holds the event stream."""
    world = build_world(config)
    n = world.n_steps
    if n == 0:
        return world
    init_iou, init_loss = world.eval_cache.evaluate(world.initial_params)
    world.events.append({
        "event": "run", "t": 0.0, "scenario_id": config.scenario_id, "seed": config.seed,
        "n_satellites": len(world.agents), "duration_s": config.duration_s, "dt_s": config.dt_s,
        "initial_iou": init_iou, "initial_loss": init_loss,
    })
    for i in range(n):
        world.t = float(i * config.dt_s)
        step(world, config.dt_s)
    t_end = float(n * config.dt_s)
    for agent in world.agents:
        final_iou, final_loss = world.eval_cache.evaluate(agent.params)
        world.events.append({
            "event": "final", "t": t_end, "sat_id": agent.sat_id, "final_iou": final_iou,
            "final_loss": final_loss, "tiles_seen": len(agent.tiles_seen),
            "samples_seen": agent.samples_seen, "params_version": agent.params.version,
        })
    world.events.append({
        "event": "servers", "t": t_end,
        "contact_counts": {k: s.contact_count for k, s in sorted(world.servers.items())},
    })
    return world
