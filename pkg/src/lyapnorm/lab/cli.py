"""Command line entry point: ``lyapnorm run|report|verify-estimates|matrix-oracle``."""
from __future__ import annotations

import argparse
import sys

from ..errors import CFLError, ConfigError, LyapnormError
from . import config as config_mod
from .report import MissingResults, report
from .runner import run

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISSING = 0, 1, 2, 3, 4


def _parser():
    p = argparse.ArgumentParser(prog="lyapnorm", description="Lyapunov exponent experiments in Sobolev norms.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run an experiment config"),
                           ("verify-estimates", "run an estimates-verify config and report"),
                           ("matrix-oracle", "run a matrix-oracle config and report")):
        q = sub.add_parser(name, help=helptext)
        q.add_argument("config")
        q.add_argument("-o", "--output", help="output directory (overrides the config)")
        q.add_argument("--report", action="store_true", help="also print the report")
    q = sub.add_parser("report", help="aggregate a results directory")
    q.add_argument("directory")
    return p


_FORCED = {"verify-estimates": "estimates-verify", "matrix-oracle": "matrix-oracle"}


def _run(args) -> int:
    try:
        cfg = config_mod.load(args.config)
        want = _FORCED.get(args.command)
        if want and cfg.experiment != want:
            raise ConfigError(f"{args.command} expects experiment = {want!r}, got {cfg.experiment!r}")
        cfg.validate()
    except ConfigError as e:
        print(f"lyapnorm: invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = run(cfg, args.output)
    except ConfigError as e:
        print(f"lyapnorm: invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (CFLError, FloatingPointError, ArithmeticError, LyapnormError) as e:
        print(f"lyapnorm: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"lyapnorm: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {out}")
    if args.report or args.command in _FORCED:
        return _report(out)
    return EXIT_OK


def _report(directory) -> int:
    try:
        rep = report(directory)
    except MissingResults as e:
        print(f"lyapnorm: {e}", file=sys.stderr)
        return EXIT_MISSING
    print(rep.render())
    return EXIT_OK if rep.passed else EXIT_CHECKS


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "report":
        return _report(args.directory)
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
