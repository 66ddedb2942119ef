"""Command line: ``vdp <experiment> --config <file> [--out DIR] [--seed N] [--threads N] [--set key=value ...]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import EXPERIMENTS, THREADS_ENV, SweepConfig, run


def parse_value(text: str):
    """JSON literal if it parses (numbers, lists, true/null), otherwise the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise argparse.ArgumentTypeError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = parse_value(value)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vdp", description="Coupled quantum van der Pol oscillator experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON config file (keys of SweepConfig)")
    p.add_argument("--out", help="output directory (default: ./out/<experiment>)")
    p.add_argument("--seed", type=int, help="base seed for stochastic runs")
    p.add_argument("--threads", type=int, help=f"worker processes (default: ${THREADS_ENV} or 1)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> SweepConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    data["experiment"] = args.experiment
    data.update(parse_overrides(args.set))
    if args.out is not None:
        data["out"] = args.out
    if args.seed is not None:
        data["seed"] = args.seed
    if args.threads is not None:
        data["threads"] = args.threads
    data.setdefault("out", f"out/{args.experiment}")
    return SweepConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
    except (OSError, ValueError, TypeError, argparse.ArgumentTypeError) as exc:
        print(f"vdp: error: {exc}", file=sys.stderr)
        return 2
    record = run(cfg)
    n_bad = len(record.failed())
    print(f"{cfg.experiment}: {len(record.points)} points, {n_bad} not ok -> {cfg.out}")
    return 1 if n_bad else 0


if __name__ == "__main__":
    sys.exit(main())
