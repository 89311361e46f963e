"""Batch experiment runner."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, ExperimentSpec, SCENARIOS, load_config
from .experiments import run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="omrsim",
        description="Run multihop-relaying simulation scenarios and sweeps.",
    )
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--scenario", choices=SCENARIOS,
                        help="override the scenario from the config file")
    parser.add_argument("--trials", type=int, help="trials per sweep point")
    parser.add_argument("--seed", type=int, help="base reproducibility seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--workers", type=int,
                        help="worker processes (0 = all cores, 1 = inline)")
    parser.add_argument("--validate-only", action="store_true",
                        help="check the configuration and exit")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_config(args.config) if args.config else ExperimentSpec()
    except ConfigError as exc:
        for diag in exc.diagnostics:
            print(f"config error: {diag}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2

    if args.scenario:
        spec.scenario = args.scenario
    if args.trials is not None:
        spec.trials = args.trials
    if args.seed is not None:
        spec.seed = args.seed
    if args.out is not None:
        spec.out_dir = args.out
    if args.workers is not None:
        spec.workers = args.workers

    diags = spec.validate()
    if diags:
        for diag in diags:
            print(f"config error: {diag}", file=sys.stderr)
        return 2
    if args.validate_only:
        print("configuration ok")
        return 0

    try:
        paths = run(spec)
    except ConfigError as exc:
        for diag in exc.diagnostics:
            print(f"config error: {diag}", file=sys.stderr)
        return 2
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
