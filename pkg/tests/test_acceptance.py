"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""
import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from orbitfl import engine
from orbitfl.artifacts import constraint_violations, dump_event, summarize, verify_run, write_run
from orbitfl.config import ConstellationConfig, load_config
from orbitfl.learner import ModelParams, generate_tiles, loss_and_gradient, stack_batch
from orbitfl.orbit import (ContactWindow, OrbitalElements, R_EARTH, eclipse_fraction_analytic,
                           is_eclipsed, orbits_per_day, propagate)
from orbitfl.protocol import (DEFAULT_RELAY, RELAY, LinkEndpoint, ServerState, max_norm_distance,
                              run_exchange, transfer_duration)


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {n:>2}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return _report


def _timed_run(cfg):
    t0 = time.perf_counter()
    world = engine.run(cfg)
    return world, time.perf_counter() - t0


@pytest.fixture(scope="module")
def runs():
    out = {}
    for name in ("scenario1.json", "scenario2.json"):
        cfg = load_config(name)
        out[name] = (cfg,) + _timed_run(cfg)
    return out


@pytest.fixture(scope="module")
def no_comm_run():
    cfg = load_config("scenario2.json")
    cfg.protocol.enabled = False
    return cfg, engine.run(cfg)


def _finals(world):
    return sorted((e for e in world.events if e["event"] == "final"), key=lambda e: e["sat_id"])


def _header(world):
    return next(e for e in world.events if e["event"] == "run")


def test_1_orbit_rates(report):
    t0 = time.perf_counter()
    r1 = orbits_per_day(R_EARTH + 786)
    r2 = orbits_per_day(R_EARTH + 450)
    elapsed = time.perf_counter() - t0
    ok = abs(r1 - 14.3) <= 0.1 and abs(r2 - 15.4) <= 0.1 and elapsed < 1e-3
    report(1, ok, f"orbits/day {r1:.3f} (786 km), {r2:.3f} (450 km), {elapsed * 1e6:.0f} us")


def test_2_batch_accounting(report):
    cfg = load_config("scenario1.json")
    cfg.constellation = ConstellationConfig(count=1)
    cfg.disaster_site = None
    cfg.protocol.enabled = False
    cfg.resources.enforce = False
    cfg.data.tiles_per_shard = 32
    t0 = time.perf_counter()
    world = engine.run(cfg)
    elapsed = time.perf_counter() - t0
    n = world.agents[0].batches_done
    assert int(Fraction(86400) // Fraction("2.01")) == 42985
    report(2, n == 42985, f"{n} batches in an unconstrained 24 h run ({elapsed:.1f} s)")


def test_3_exchange_ordering(runs, report):
    s1 = summarize(runs["scenario1.json"][1].events)
    s2 = summarize(runs["scenario2.json"][1].events)
    n1, n2 = s1["exchanges_completed"], s2["exchanges_completed"]
    elapsed = runs["scenario1.json"][2] + runs["scenario2.json"][2]
    ratio = n2 / n1 if n1 else math.inf
    ok = n2 > n1 > 0 and 1.2 <= ratio <= 3.0 and elapsed < 300
    report(3, ok, f"completed exchanges: scenario 1 = {n1}, scenario 2 = {n2}, ratio {ratio:.2f}, "
                  f"both runs {elapsed:.0f} s")


def test_4_eclipse_oracle(report):
    t0 = time.perf_counter()
    el = OrbitalElements.from_altitude(786, 0.0)
    ts = np.linspace(0, el.period_s, 100_000, endpoint=False)
    sampled = float(is_eclipsed(propagate(el, ts), np.array([1.0, 0.0, 0.0])).mean())
    analytic = eclipse_fraction_analytic(R_EARTH + 786)
    elapsed = time.perf_counter() - t0
    ok = abs(sampled - 0.349) <= 0.005 and abs(sampled - analytic) <= 0.005 and elapsed < 1.0
    report(4, ok, f"sampled eclipse fraction {sampled:.4f} vs analytic {analytic:.4f} ({elapsed:.2f} s)")


def test_5_constraint_invariants(runs, report):
    violations, socs, standby = 0, [], 0
    for _, world, _ in runs.values():
        violations += len(constraint_violations(world.events))
        steps = [e for e in world.events if e["event"] == "step"]
        socs.extend(e["soc"] for e in steps)
        standby += sum(e["activity"] == "Standby" for e in steps)
    ok = violations == 0 and 0.0 <= min(socs) and max(socs) <= 1.0 and standby > 0
    report(5, ok, f"{violations} violations, SoC in [{min(socs):.3f}, {max(socs):.3f}], "
                  f"{standby} standby steps")


def test_6_gradient_checks(report):
    t0 = time.perf_counter()
    tiles = generate_tiles(42, 6, 0, size=16)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        batch = [tiles[i] for i in rng.choice(len(tiles), 2, replace=False)]
        X, y = stack_batch(batch)
        w = rng.normal(scale=0.8, size=X.shape[1])
        g = loss_and_gradient(w, X, y)[1]
        fd = np.empty_like(w)
        for i in range(w.size):
            e = np.zeros_like(w)
            e[i] = 1e-6
            fd[i] = (loss_and_gradient(w + e, X, y)[0] - loss_and_gradient(w - e, X, y)[0]) / 2e-6
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    elapsed = time.perf_counter() - t0
    report(6, worst < 1e-4 and elapsed < 1.0,
           f"20 finite-difference checks, worst relative error {worst:.2e} ({elapsed:.2f} s)")


def test_7_learning_benefit(runs, no_comm_run, report):
    details, ok = [], True
    for name, (_, world, _) in runs.items():
        init = _header(world)["initial_loss"]
        worst = max(f["final_loss"] for f in _finals(world))
        ok &= worst < init
        details.append(f"{name}: worst final {worst:.6f} < initial {init:.6f}")
    comm = np.mean([f["final_loss"] for f in _finals(runs["scenario2.json"][1])])
    alone = np.mean([f["final_loss"] for f in _finals(no_comm_run[1])])
    ok &= comm <= alone
    details.append(f"scenario 2 mean final loss with exchanges {comm:.6f} vs without {alone:.6f}")
    report(7, bool(ok), "; ".join(details))


def test_8_contraction(report):
    endpoint = LinkEndpoint("EDRS", RELAY, 1e7, DEFAULT_RELAY)
    window = ContactWindow("EDRS", 0.0, 1e12)

    class Agent:
        def __init__(self, sat_id, w):
            self.sat_id = sat_id
            self.params = ModelParams(np.array(w, dtype=float))
            self.adam = None
            self.last_exchange_version = -1

    a, b = Agent(0, [3.0, -1.0, 0.5, 8.0, 0.0, -2.0]), Agent(1, [-5.0, 4.0, 2.0, 0.0, 1.0, 6.0])
    server = ServerState(ModelParams(np.zeros(6)), 0, 0.5)
    dist, rounds = max_norm_distance(a.params, b.params), 0
    while dist >= 1e-9 and rounds < 100:
        rounds += 1
        for agent in (a, b):
            agent.last_exchange_version = agent.params.version - 1  # no training: force the gate open
            _, server = run_exchange(agent, server, endpoint, window, 0.0)
        dist = max_norm_distance(a.params, b.params)
    report(8, dist < 1e-9, f"max-norm distance {dist:.2e} after {rounds} alternating rounds")


def test_9_determinism(runs, tmp_path, report):
    cfg, world, _ = runs["scenario1.json"]
    again = engine.run(cfg)
    first = tmp_path / "first"
    second = tmp_path / "second"
    write_run(world.events, first, cfg.to_dict())
    write_run(again.events, second, cfg.to_dict())
    same = (first / "events.jsonl").read_bytes() == (second / "events.jsonl").read_bytes()
    problems = verify_run(first)
    summary_ok = json.loads((first / "summary.json").read_text()) == summarize(
        [json.loads(dump_event(e)) for e in world.events])
    report(9, same and not problems and summary_ok,
           f"events.jsonl byte-identical: {same}; verify mismatches: {len(problems)}")


def test_10_transfer_arithmetic(report):
    per_direction = transfer_duration(16_000_000, 1e7)
    endpoint = LinkEndpoint("EDRS", RELAY, 1e7, DEFAULT_RELAY)

    class Agent:
        sat_id = 0
        params = ModelParams(np.arange(6.0), version=4)
        adam = None
        last_exchange_version = 0

    sat = Agent()
    server = ServerState(ModelParams(np.full(6, -1.0), 2), 5, 0.5)
    sat_bytes = sat.params.weights.tobytes()
    server_bytes = server.global_params.weights.tobytes()
    rec, after = run_exchange(sat, server, endpoint, ContactWindow("EDRS", 0.0, 20.0), 0.0)
    atomic = (rec.outcome == "aborted" and sat.params.weights.tobytes() == sat_bytes
              and sat.params.version == 4 and sat.last_exchange_version == 0
              and after.global_params.weights.tobytes() == server_bytes
              and after.global_params.version == 2 and after.contact_count == 5)
    ok = per_direction == pytest.approx(12.8, abs=1e-12) and atomic
    report(10, ok, f"{per_direction:.1f} s per direction; 20 s window -> {rec.outcome}, "
                   f"state unchanged bit-for-bit: {atomic}")
