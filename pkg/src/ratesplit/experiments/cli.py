"""Command line entry point: ``ratesplit run <config> [options]``."""

from __future__ import annotations

import argparse
import os
import sys

from ..errors import ConfigError, RateSplitError
from .config import FORMATS, load_config
from .runner import run_experiment

SEED_ENV = "RATESPLIT_SEED"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def build_parser():
    parser = argparse.ArgumentParser(prog="ratesplit", description="Rate-splitting experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", help="path to a key = value config file")
    run.add_argument("--seed", type=int, help="master seed (overrides the config)")
    run.add_argument("--trials", type=int, help="Monte Carlo trials (overrides the config)")
    run.add_argument("--out", help="output file; stdout when neither this nor output.path is set")
    run.add_argument("--format", choices=FORMATS, help="output format")
    run.add_argument("--workers", type=int, help="worker processes")
    return parser


def _env_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError([f"{SEED_ENV} must be an integer, got {raw!r}"]) from None


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, default_seed=_env_seed())
        cfg = cfg.with_overrides(args.seed, args.trials, args.out, args.format, args.workers)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        table = run_experiment(cfg)
    except RateSplitError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if cfg.output_path:
        table.write(cfg.output_path, cfg.output_format)
    else:
        sys.stdout.write(table.to_csv() if cfg.output_format == "csv" else table.to_json())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
