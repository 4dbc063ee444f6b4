"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical-contract failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import __version__
from .errors import ConfigError
from .scenarios import ScenarioConfig, load_config, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("tqdbattery")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI scenario file; built-in defaults when omitted")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--steps", type=int, help="time steps per tau")
    p.add_argument("--quad-points", type=int, help="Simpson nodes over [0, tau] for cost runs")
    p.add_argument("--space", choices=("full", "sector"), help="working space for propagation")
    p.add_argument("--workers", type=int, help="parallel workers (default from TQDBATTERY_WORKERS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tqdbattery",
        description="Adiabatic and counter-diabatic charging of a qubit battery, written as CSV tables.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("sweep-tau", "final ergotropy at t = tau over a grid of omega*tau"),
        ("trace", "ergotropy along [0, t_end] including the always-on region"),
        ("cost", "adiabatic vs counter-diabatic driving cost"),
    ):
        _add_common(sub.add_parser(name, help=help_))
    st = sub.add_parser("selftest", help="run the built-in oracle checks")
    st.add_argument("--quick", action="store_true", help="skip the slower trajectory checks")
    return parser


def _scenario_from_args(args: argparse.Namespace) -> ScenarioConfig:
    sc = load_config(args.config, args.command) if args.config else ScenarioConfig.defaults(args.command)
    overrides = {}
    if args.out:
        overrides["output_dir"] = args.out
    if args.steps is not None:
        overrides["steps_per_tau"] = args.steps
    if args.quad_points is not None:
        overrides["quad_points"] = args.quad_points
    if args.space:
        overrides["space"] = args.space
    if args.workers is not None:
        overrides["workers"] = args.workers
    return replace(sc, **overrides) if overrides else sc


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "selftest":
        from .selftest import run_selftest

        return EXIT_OK if run_selftest(quick=args.quick) else EXIT_NUMERICAL

    try:
        sc = _scenario_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    result = run_scenario(sc)
    print(result.csv_path)
    if result.flagged:
        print(
            f"warning: {len(result.flagged)} point(s) exceeded the step-halving gate; see {result.manifest_path}",
            file=sys.stderr,
        )
    if result.failed:
        print(f"{len(result.failed)} point(s) failed; see {result.manifest_path}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
