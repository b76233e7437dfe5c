"""Static SVG figures from a finished run directory."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .artifacts import EVENTS_FILE, TIMESERIES_FILE, read_events, read_timeseries  # noqa: E402
from .constraints import SOC_THRESHOLD, TEMPERATURE_LIMIT_C  # noqa: E402

ACTIVITY_COLORS = {
    "Training": "tab:blue",
    "Exchanging": "tab:orange",
    "Inference": "tab:green",
    "Standby": "tab:red",
}
PLOT_FILES = ("loss.svg", "soc.svg", "temperature.svg", "exchanges.svg")


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _hours(ts):
    return [t / 3600.0 for t in ts]


def plot_loss(rows, path):
    by_sat = defaultdict(lambda: ([], []))
    for t, sat, _act, _soc, _temp, loss in rows:
        if loss is not None:
            by_sat[sat][0].append(t)
            by_sat[sat][1].append(loss)
    fig, ax = plt.subplots(figsize=(8, 4))
    for sat in sorted(by_sat):
        ts, ls = by_sat[sat]
        ax.plot(_hours(ts), ls, lw=0.6, label=f"sat {sat}")
    ax.set_xlabel("time [h]")
    ax.set_ylabel("training loss (MSE)")
    ax.set_title("Training loss")
    if by_sat:
        ax.legend(fontsize=6, ncol=4)
    _save(fig, path)


def plot_soc(rows, events, path, sat_id=0):
    fig, ax = plt.subplots(figsize=(8, 4))
    mine = [r for r in rows if r[1] == sat_id]
    eclipse = [e["t"] for e in events if e.get("event") == "step" and e["sat_id"] == sat_id and e["in_eclipse"]]
    dt = next((e["dt_s"] for e in events if e.get("event") == "run"), 0.0)
    for t in eclipse:
        ax.axvspan(t / 3600.0, (t + dt) / 3600.0, color="0.85", lw=0)
    if mine:
        ax.plot(_hours(r[0] for r in mine), [r[3] for r in mine], color="0.6", lw=0.4)
    for activity, color in ACTIVITY_COLORS.items():
        pts = [r for r in mine if r[2] == activity]
        if pts:
            ax.scatter(_hours(r[0] for r in pts), [r[3] for r in pts], s=1.5, color=color,
                       label=activity, rasterized=False)
    ax.axhline(SOC_THRESHOLD, color="k", ls="--", lw=0.8, gid="soc-threshold")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("time [h]")
    ax.set_ylabel("state of charge")
    ax.set_title(f"Satellite {sat_id} state of charge (grey: eclipse)")
    if mine:
        ax.legend(fontsize=6, markerscale=4)
    _save(fig, path)


def plot_temperature(rows, path):
    by_sat = defaultdict(lambda: ([], []))
    for t, sat, _act, _soc, temp, _loss in rows:
        by_sat[sat][0].append(t)
        by_sat[sat][1].append(temp)
    fig, ax = plt.subplots(figsize=(8, 4))
    for sat in sorted(by_sat):
        ts, temps = by_sat[sat]
        ax.plot(_hours(ts), temps, lw=0.6, label=f"sat {sat}")
    ax.axhline(TEMPERATURE_LIMIT_C, color="k", ls="--", lw=0.8, gid="temperature-limit")
    ax.set_xlabel("time [h]")
    ax.set_ylabel("temperature [°C]")
    ax.set_title("Processor temperature")
    if by_sat:
        ax.legend(fontsize=6, ncol=4)
    _save(fig, path)


def plot_exchanges(events, path):
    done = defaultdict(list)
    aborted = defaultdict(list)
    for e in events:
        if e.get("event") != "step" or not e["exchange"]:
            continue
        outcome = e["exchange"]["outcome"]
        if outcome == "completed":
            done[e["sat_id"]].append(e["exchange"]["t_done"] / 3600.0)
        elif outcome == "aborted":
            aborted[e["sat_id"]].append(e["exchange"]["t_done"] / 3600.0)
    n_sats = next((e["n_satellites"] for e in events if e.get("event") == "run"), 0)
    fig, ax = plt.subplots(figsize=(8, 3))
    for sat in range(n_sats):
        if done[sat]:
            ax.eventplot(done[sat], lineoffsets=sat, linelengths=0.7, colors="tab:orange", lw=0.8)
        if aborted[sat]:
            ax.eventplot(aborted[sat], lineoffsets=sat, linelengths=0.7, colors="tab:red", lw=0.8)
    ax.set_xlabel("time [h]")
    ax.set_ylabel("satellite")
    ax.set_title("Model exchanges (orange: completed, red: aborted)")
    _save(fig, path)


def plot_run(out_dir, sat_id: int = 0) -> list[Path]:
    out = Path(out_dir)
    for name in (EVENTS_FILE, TIMESERIES_FILE):
        if not (out / name).exists():
            raise FileNotFoundError(f"{out / name} not found; run a scenario first")
    rows = read_timeseries(out / TIMESERIES_FILE)
    events = read_events(out / EVENTS_FILE)
    plot_dir = out / "plots"
    plot_dir.mkdir(exist_ok=True)
    paths = [plot_dir / name for name in PLOT_FILES]
    plot_loss(rows, paths[0])
    plot_soc(rows, events, paths[1], sat_id)
    plot_temperature(rows, paths[2])
    plot_exchanges(events, paths[3])
    return paths
