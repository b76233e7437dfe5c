"""Run artifacts: the JSONL event log, the CSV time series and the summary.

The summary is a pure function of the event log (:func:`summarize`), which
is what makes ``verify`` possible: re-reading ``events.jsonl`` must give back
``summary.json`` exactly.
"""
from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from pathlib import Path
from typing import Iterable, Optional

EVENTS_FILE = "events.jsonl"
TIMESERIES_FILE = "timeseries.csv"
SUMMARY_FILE = "summary.json"
CONFIG_FILE = "config.json"

TIMESERIES_COLUMNS = ("t", "sat_id", "activity", "soc", "temperature_c", "train_loss")


def dump_event(event: dict) -> str:
    return json.dumps(event, separators=(",", ":"), allow_nan=False)


def write_events(events: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in events:
            fh.write(dump_event(e))
            fh.write("\n")


def read_events(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_timeseries(events: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TIMESERIES_COLUMNS)
        for e in events:
            if e.get("event") != "step":
                continue
            loss = e["train_loss"]
            writer.writerow([repr(e["t"]), e["sat_id"], e["activity"], repr(e["soc"]),
                             repr(e["temperature_c"]), "" if loss is None else repr(loss)])


def read_timeseries(path) -> list[tuple]:
    """Rows as ``(t, sat_id, activity, soc, temperature_c, train_loss)`` tuples."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TIMESERIES_COLUMNS:
            raise ValueError(f"unexpected timeseries header {header}")
        for t, sat, act, soc, temp, loss in reader:
            rows.append((float(t), int(sat), act, float(soc), float(temp),
                         None if loss == "" else float(loss)))
    return rows


def _mean(values) -> Optional[float]:
    values = list(values)
    return math.fsum(values) / len(values) if values else None


def summarize(events: list[dict]) -> dict:
    """Aggregate totals for a run, computed only from its event stream."""
    header = next((e for e in events if e["event"] == "run"), None)
    steps = [e for e in events if e["event"] == "step"]
    finals = sorted((e for e in events if e["event"] == "final"), key=lambda e: e["sat_id"])
    servers = next((e for e in events if e["event"] == "servers"), None)
    dt = header["dt_s"] if header else 0.0
    n_sats = header["n_satellites"] if header else 0

    per = defaultdict(lambda: {"batches": 0, "standby_steps": 0, "eclipse_steps": 0,
                               "completed": 0, "aborted": 0, "activity": Counter(),
                               "min_soc": None, "max_temperature_c": None, "first_inference_t": None})
    by_kind: Counter = Counter()
    by_endpoint: Counter = Counter()
    activity_steps: Counter = Counter()
    inference_evals = 0
    for e in steps:
        p = per[e["sat_id"]]
        p["batches"] += e["batches"]
        p["activity"][e["activity"]] += 1
        activity_steps[e["activity"]] += 1
        if e["activity"] == "Standby":
            p["standby_steps"] += 1
        if e["in_eclipse"]:
            p["eclipse_steps"] += 1
        if e["activity"] == "Inference":
            inference_evals += 1
            if p["first_inference_t"] is None:
                p["first_inference_t"] = e["t"]
        p["min_soc"] = e["soc"] if p["min_soc"] is None else min(p["min_soc"], e["soc"])
        temp = e["temperature_c"]
        p["max_temperature_c"] = temp if p["max_temperature_c"] is None else max(p["max_temperature_c"], temp)
        ex = e["exchange"]
        if ex and ex["outcome"] in ("completed", "aborted"):
            p[ex["outcome"]] += 1
            if ex["outcome"] == "completed":
                by_kind[ex["kind"]] += 1
                by_endpoint[ex["endpoint"]] += 1

    final_by_sat = {f["sat_id"]: f for f in finals}
    per_satellite = []
    for sat_id in range(n_sats):
        p = per[sat_id]
        f = final_by_sat.get(sat_id, {})
        per_satellite.append({
            "sat_id": sat_id,
            "batches": p["batches"],
            "standby_seconds": p["standby_steps"] * dt,
            "eclipse_seconds": p["eclipse_steps"] * dt,
            "exchanges_completed": p["completed"],
            "exchanges_aborted": p["aborted"],
            "final_iou": f.get("final_iou"),
            "final_loss": f.get("final_loss"),
            "tiles_seen": f.get("tiles_seen", 0),
            "samples_seen": f.get("samples_seen", 0),
            "min_soc": p["min_soc"],
            "max_temperature_c": p["max_temperature_c"],
            "first_inference_t": p["first_inference_t"],
        })

    return {
        "scenario_id": header["scenario_id"] if header else None,
        "seed": header["seed"] if header else None,
        "n_satellites": n_sats,
        "duration_s": header["duration_s"] if header else 0.0,
        "steps": len(steps) // n_sats if n_sats else 0,
        "total_batches": sum(p["batches"] for p in per_satellite),
        "exchanges_completed": sum(p["exchanges_completed"] for p in per_satellite),
        "exchanges_aborted": sum(p["exchanges_aborted"] for p in per_satellite),
        "exchanges_by_kind": dict(sorted(by_kind.items())),
        "exchanges_by_endpoint": dict(sorted(by_endpoint.items())),
        "server_contacts": servers["contact_counts"] if servers else {},
        "initial_mean_iou": header["initial_iou"] if header else None,
        "initial_mean_loss": header["initial_loss"] if header else None,
        "final_mean_iou": _mean(f["final_iou"] for f in finals),
        "final_mean_loss": _mean(f["final_loss"] for f in finals),
        "standby_seconds": sum(p["standby_seconds"] for p in per_satellite),
        "eclipse_seconds": sum(p["eclipse_seconds"] for p in per_satellite),
        "activity_seconds": {a: n * dt for a, n in sorted(activity_steps.items())},
        "inference_evaluations": inference_evals,
        "per_satellite": per_satellite,
    }


def write_summary(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, allow_nan=False) + "\n")


def write_run(events: list[dict], out_dir, config_dict: Optional[dict] = None) -> dict:
    """Write all artifacts for a finished run into ``out_dir``; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "events_path": out / EVENTS_FILE,
        "timeseries_path": out / TIMESERIES_FILE,
        "summary_path": out / SUMMARY_FILE,
    }
    write_events(events, paths["events_path"])
    write_timeseries(events, paths["timeseries_path"])
    write_summary(summarize(events), paths["summary_path"])
    if config_dict is not None:
        (out / CONFIG_FILE).write_text(json.dumps(config_dict, indent=2) + "\n")
    return paths


def verify_run(out_dir) -> list[str]:
    """Recompute the summary from the event log; return a list of mismatches."""
    out = Path(out_dir)
    for name in (EVENTS_FILE, SUMMARY_FILE):
        if not (out / name).exists():
            return [f"missing {name}"]
    recomputed = json.loads(json.dumps(summarize(read_events(out / EVENTS_FILE))))
    stored = json.loads((out / SUMMARY_FILE).read_text())
    problems = []
    for key in sorted(set(recomputed) | set(stored)):
        if recomputed.get(key) != stored.get(key):
            problems.append(f"{key}: summary has {stored.get(key)!r}, events give {recomputed.get(key)!r}")
    return problems


def constraint_violations(events: Iterable[dict], soc_threshold: float = 0.2,
                          temperature_limit: float = 40.0) -> list[dict]:
    """Steps that trained or exchanged from a state that should have forced standby."""
    return [e for e in events if e.get("event") == "step"
            and e["activity"] in ("Training", "Exchanging")
            and (e["soc"] < soc_threshold or e["temperature_c"] > temperature_limit)]
