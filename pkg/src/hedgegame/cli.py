"""Command line entry point: ``hedgegame {run,montecarlo,sweep,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, load_config, parse_seeds
from .experiments import ExperimentError, cmd_montecarlo, cmd_report, cmd_run, cmd_sweep

OUT_ENV = "HEDGEGAME_OUT"
DEFAULT_OUT = "hedgegame-out"


def _out_dir(args, config) -> Path:
    return Path(args.out or config.outputs.get("dir") or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _seeds(args, config) -> list[int]:
    if args.seeds is not None:
        return parse_seeds(args.seeds)
    if args.seed is not None:
        return [args.seed]
    return list(config.seeds)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hedgegame", description="Exponential-weights learning in finite games."
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="single seed")
    common.add_argument("--seeds", help="seed range A..B (inclusive)")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--quiet", action="store_true", help="print nothing on success")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="single run with trajectory CSV")
    mc = sub.add_parser("montecarlo", parents=[common], help="aggregate over a seed range")
    mc.add_argument("--batch-size", type=int, default=256, help="runs simulated together")
    sw = sub.add_parser("sweep", parents=[common], help="fitted vs predicted slope over a grid")
    sw.add_argument("--param", help="dotted config path, e.g. schedule.gamma")
    sw.add_argument("--values", help="comma-separated grid values")
    sub.add_parser("report", parents=[common], help="rate fit, noise ledger and diagnostics")
    return parser


def _parse_values(text: str | None):
    if text is None:
        return None
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append(int(tok))
        except ValueError:
            out.append(float(tok))
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    say = (lambda *a: None) if args.quiet else print
    try:
        config = load_config(args.config)
        seeds = _seeds(args, config)
        out = _out_dir(args, config)
        if args.command == "run":
            if len(seeds) != 1:
                raise ConfigError("run takes a single seed; use montecarlo for a range")
            record = cmd_run(config, seeds[0], out)
            say(json.dumps({**record.to_dict(), "record_hash": record.record_hash}, indent=2))
        elif args.command == "montecarlo":
            report = cmd_montecarlo(config, seeds, out, batch_size=args.batch_size)
            report.pop("records")
            say(json.dumps(report, indent=2))
        elif args.command == "sweep":
            values = _parse_values(args.values)
            cfg = config
            if args.seed is not None or args.seeds is not None:
                cfg.seeds = seeds
            rows = cmd_sweep(cfg, args.param, values, out)
            for r in rows:
                say(f"{r['parameter']}={r['value']}: fitted {r['fitted_slope']:.6g} "
                    f"predicted {r['theoretical_slope']:.6g} ratio {r['ratio']:.4f}")
        elif args.command == "report":
            summary = cmd_report(config, seeds[0], out)
            say(json.dumps(summary, indent=2))
    except (ConfigError, ExperimentError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
