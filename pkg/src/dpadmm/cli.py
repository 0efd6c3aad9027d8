"""Command-line entry point: run, summarize, and check experiment configs.

Exit codes: 0 on success, 1 for configuration problems, 2 when a local
solve fails during a run.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .experiments import (
    ConfigError,
    figure_tables,
    parse_config,
    run_experiment,
    summarize_metrics,
)
from .penalty import SolverError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2

OUTPUT_ROOT_ENV = "DPADMM_OUTPUT_ROOT"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpadmm",
        description="Differentially private consensus optimization experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the experiment grid described by a config")
    run_p.add_argument("config", type=Path)
    run_p.add_argument("--output", type=Path, default=None, help="override output directory")
    run_p.add_argument("--rounds", type=int, default=None, help="override round count")
    run_p.add_argument(
        "--repetitions", type=int, default=None, help="override repetition count"
    )
    run_p.add_argument("--seed", type=int, default=None, help="override master seed")
    run_p.add_argument("--workers", type=int, default=1, help="parallel grid workers")
    run_p.add_argument(
        "--figures", action="store_true", help="also emit per-figure aggregated tables"
    )

    sum_p = sub.add_parser("summarize", help="rebuild summary.csv from metrics files")
    sum_p.add_argument("metrics_dir", type=Path)
    sum_p.add_argument(
        "--figures", action="store_true", help="also emit per-figure aggregated tables"
    )

    check_p = sub.add_parser("check", help="validate a config without running anything")
    check_p.add_argument("config", type=Path)
    return parser


def _load_config(args):
    config = parse_config(args.config)
    if getattr(args, "output", None) is not None:
        config.output_dir = args.output
    if getattr(args, "rounds", None) is not None:
        config.rounds = args.rounds
    if getattr(args, "repetitions", None) is not None:
        config.repetitions = args.repetitions
    if getattr(args, "seed", None) is not None:
        config.master_seed = args.seed
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not config.output_dir.is_absolute():
        config.output_dir = Path(root) / config.output_dir
    config.validate()
    return config


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "check":
            _load_config(args)
            print(f"config ok: {args.config}")
            return EXIT_OK
        if args.command == "run":
            config = _load_config(args)
            summary = run_experiment(config, workers=args.workers)
            if args.figures:
                figure_tables(config.output_dir)
            print(f"wrote {summary}")
            return EXIT_OK
        if args.command == "summarize":
            summary = summarize_metrics(args.metrics_dir)
            if args.figures:
                figure_tables(args.metrics_dir)
            print(f"wrote {summary}")
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
