"""Command line entry point: ``predalloc run | sweep | summarize``.

Exit codes: 0 on success, 1 for configuration errors, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .config import ConfigError, load_config, load_sweep
from .experiment import read_results, run_experiment, summarize, write_results, write_summary

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

log = logging.getLogger("predalloc")


def _emit(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    results = run_experiment(cfg, seeds=args.seed)
    _emit(write_results(results), args.output)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg, sweep = load_sweep(args.sweep)
    results = run_experiment(cfg, sweep, seeds=args.seed)
    _emit(write_results(results), args.output)
    return EXIT_OK


def _cmd_summarize(args) -> int:
    rows = read_results(args.input)
    _emit(write_summary(summarize(rows)), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="predalloc",
                                     description="Predictive two-timescale resource allocation experiments.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every policy of one scenario over its seeds")
    run.add_argument("config", help="scenario YAML file")
    run.add_argument("-o", "--output", help="result CSV (default: stdout)")
    run.add_argument("--seed", type=int, action="append",
                     help="seed override; repeat for several replications")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="run a parameter sweep")
    sweep.add_argument("sweep", help="sweep YAML file (base scenario + sweep block)")
    sweep.add_argument("-o", "--output", help="result CSV (default: stdout)")
    sweep.add_argument("--seed", type=int, action="append", help="seed override; repeatable")
    sweep.set_defaults(func=_cmd_sweep)

    summ = sub.add_parser("summarize", help="aggregate a result CSV per sweep point and policy")
    summ.add_argument("input", help="result CSV written by run or sweep")
    summ.add_argument("-o", "--output", help="summary CSV (default: stdout)")
    summ.set_defaults(func=_cmd_summarize)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything else is a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
