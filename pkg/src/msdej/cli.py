"""Command-line interface.

Subcommands:
  run     execute a convergence study from a config file
  sets    print a hierarchical or remainder index set, one index per line
  oracle  print the example1 moment-oracle values at a given time

Exit codes: 0 success, 2 configuration error, 3 divergence-threshold failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .experiment import (
    ConfigError,
    DivergenceError,
    emit,
    estimate_errors,
    load_config,
    moment_oracle_example1,
    render,
)
from .model import ModelCapabilityError
from .multiindex import (
    InvalidIndexError,
    remainder_set,
    strong_hierarchical_set,
    weak_hierarchical_set,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msdej", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a convergence study")
    run.add_argument("--config", required=True, help="path to a key = value config file")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--output", default=None, help="override the output path")
    run.add_argument("--format", dest="fmt", choices=("csv", "report"), default=None)
    run.add_argument("--workers", type=int, default=None, help="override worker count")

    sets = sub.add_parser("sets", help="print an index set")
    which = sets.add_mutually_exclusive_group(required=True)
    which.add_argument("--gamma", help="strong set order (half-integer, e.g. 0.5, 1, 1.5)")
    which.add_argument("--eta", type=int, help="weak set order (positive integer)")
    sets.add_argument("--m", type=int, default=1, help="noise dimension (default 1)")
    sets.add_argument(
        "--remainder", action="store_true", help="print the remainder set instead"
    )

    oracle = sub.add_parser("oracle", help="example1 moment oracle")
    oracle.add_argument("--model", default="example1")
    oracle.add_argument("--t", type=float, required=True)
    oracle.add_argument("--a", type=float, default=1.25)
    oracle.add_argument("--b", type=float, default=0.75)
    oracle.add_argument("--c", type=float, default=0.25)
    oracle.add_argument("--lam", type=float, default=1.0)
    oracle.add_argument("--x0", type=float, default=0.1)
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.output is not None:
        overrides["output"] = args.output
    if args.fmt is not None:
        overrides["fmt"] = args.fmt
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        cfg = replace(cfg, **overrides)
        cfg.validate()
    table = estimate_errors(cfg)
    if cfg.output:
        emit(table, cfg.output, cfg.fmt)
        print(f"wrote {cfg.fmt} table to {cfg.output}")
    else:
        sys.stdout.write(render(table, cfg.fmt))
    return 0


def _cmd_sets(args) -> int:
    if args.gamma is not None:
        base = strong_hierarchical_set(args.gamma, args.m)
    else:
        base = weak_hierarchical_set(args.eta, args.m)
    chosen = remainder_set(base) if args.remainder else base
    for alpha in chosen:
        print(str(alpha))
    return 0


def _cmd_oracle(args) -> int:
    if args.model != "example1":
        raise ConfigError(f"the moment oracle is defined for example1 only, got '{args.model}'")
    m1, m2 = moment_oracle_example1(
        args.t, {"a": args.a, "b": args.b, "c": args.c, "lam": args.lam, "x0": args.x0}
    )
    print(f"m1 = {m1:.12e}")
    print(f"m2 = {m2:.12e}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sets":
            return _cmd_sets(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        parser.error(f"unknown command {args.command}")
    except (ConfigError, InvalidIndexError, ModelCapabilityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
