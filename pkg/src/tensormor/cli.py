"""Batch command-line interface.

``tensormor <method> --config <file.json> [--out <dir>] [--seed <u64>]
[--verbose]`` runs one experiment per invocation; ``tensormor compare``
diffs two CSV reports. Exit codes: 0 success, 2 usage or configuration
error, 3 numerical breakdown or divergence (trace dumped to stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback

from .bench import METHODS, compare, load_config, run
from .errors import ConfigError, DivergenceError, NumericalBreakdownError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tensormor",
        description="Low-rank reduction and tensor-solver benchmarks",
    )
    sub = parser.add_subparsers(dest="command", metavar="<method>")
    for method in METHODS:
        p = sub.add_parser(method, help=f"run the {method} method")
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--verbose", action="store_true")
        p.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering next to the CSV artifacts")
    cmp_parser = sub.add_parser("compare", help="diff two CSV reports")
    cmp_parser.add_argument("report_a")
    cmp_parser.add_argument("report_b")
    cmp_parser.add_argument("--factor", type=float, default=2.0,
                            help="flag ratios beyond this factor")
    cmp_parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        if args.command == "compare":
            summary = compare(args.report_a, args.report_b,
                              factor=args.factor)
            print(json.dumps(summary, indent=2))
            return 0
        config = load_config(args.config)
        result = run(config, args.out, method=args.command, seed=args.seed,
                     verbose=args.verbose, figures=not args.no_figures)
        if args.verbose:
            print(json.dumps(result, indent=2))
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalBreakdownError, DivergenceError) as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        traceback.print_exc(file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
