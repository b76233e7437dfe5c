"""Command line entry point: validate-config, run, plot, verify."""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import tempfile
from pathlib import Path

from .artifacts import write_run, verify_run
from .config import load_config
from .errors import ConfigError

log = logging.getLogger("orbitfl")


def _load(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return None


def cmd_validate(args) -> int:
    cfg = _load(args.path)
    if cfg is None:
        return 2
    print(json.dumps(cfg.to_dict(), indent=2))
    return 0


def cmd_run(args) -> int:
    from . import engine

    cfg = _load(args.scenario)
    if cfg is None:
        return 2
    if args.duration_hours is not None:
        cfg.duration_s = args.duration_hours * 3600.0
    if args.seed is not None:
        cfg.seed = args.seed
    if args.no_exchange:
        cfg.protocol.enabled = False
    try:
        cfg.validate()
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2

    log.info("running scenario %d for %.0f s (seed %d)", cfg.scenario_id, cfg.duration_s, cfg.seed)
    world = engine.run(cfg)
    # write into a scratch directory first so a failure never leaves partial output
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out.parent) as tmp:
        write_run(world.events, tmp, cfg.to_dict())
        out.mkdir(exist_ok=True)
        for f in Path(tmp).iterdir():
            shutil.move(str(f), out / f.name)
    summary = json.loads((out / "summary.json").read_text())
    print(f"wrote {out}: {summary['total_batches']} batches, "
          f"{summary['exchanges_completed']} exchanges, final mean IoU {summary['final_mean_iou']}")
    return 0


def cmd_plot(args) -> int:
    from .plots import plot_run

    try:
        paths = plot_run(args.out)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


def cmd_verify(args) -> int:
    problems = verify_run(args.out)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return 1
    print("summary.json matches events.jsonl")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orbitfl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-config", help="check a scenario file and echo the effective config")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate a scenario and write artifacts")
    p.add_argument("--scenario", required=True, help="scenario JSON path or bundled name")
    p.add_argument("--duration-hours", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-exchange", action="store_true", help="disable model exchanges")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="render SVG plots for a finished run")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("verify", help="recompute summary.json from events.jsonl")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
