"""Command-line entry point: run, sweep, verify, fit."""

from __future__ import annotations

import argparse
import logging
import sys

from . import runner


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twisted-el", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one configuration")
    p.add_argument("--config", required=True, help="YAML config file")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sweep", help="run a parameter grid and fit sigma-rates")
    p.add_argument("--spec", required=True, help="YAML sweep spec (base + grid)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--parallel", type=int, default=1, help="concurrent runs")

    p = sub.add_parser("verify", help="run the invariant suite")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument(
        "--mutation",
        choices=("none", "lh-sign"),
        default="none",
        help="inject a known defect to confirm the suite catches it",
    )

    p = sub.add_parser("fit", help="fit an exponential rate to a timeseries column")
    p.add_argument("--in", dest="path", required=True, help="timeseries.csv")
    p.add_argument("--column", default="sigma")
    p.add_argument("--window", required=True, help="t0:t1")
    return parser


def _verify(level: str, mutation: str) -> int:
    from . import modulation

    original = modulation.apply_Lh
    if mutation == "lh-sign":
        # flip the sign of the potential term of L_h
        def broken(z, rho_grid_, m, adjoint=False):
            return original(z, rho_grid_, -m, adjoint)

        modulation.apply_Lh = broken
    try:
        checks = runner.verify_checks(level)
    finally:
        modulation.apply_Lh = original
    print(runner.format_checks(checks))
    return 0 if all(c.passed for c in checks) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return runner.run_command(args.config, args.out)
    if args.command == "sweep":
        return runner.sweep_command(args.spec, args.out, args.parallel)
    if args.command == "verify":
        return _verify(args.level, args.mutation)
    code, message = runner.fit_command(args.path, args.column, args.window)
    print(message, file=sys.stdout if code == 0 else sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
