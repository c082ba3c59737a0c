"""
Command-line front end for the LQG identification toolkit.

    lqg solve|identify|variance|tax-sweep|roundtrip --config <path> [--out <dir>]
        [--seed N] [--draws N] [--positive] [--n N]

Exit codes: 0 success, 1 configuration error, 2 well-posedness failure,
3 identification or variance failure.
"""

import argparse
import sys
from typing import List, Optional

from . import __version__
from .config import *
from .errors import ConfigError
from .logger import get_logger, setup_logger
from .pipeline import LQGPipeline
from .scenario import ScenarioLoader, read_teams_file, tau_grid

logger = get_logger()


def _count(text: str) -> int:
    """Non-negative integer; scientific notation such as 1e6 is accepted."""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a count, got {text!r}")
    if value < 0 or value != int(value):
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return int(value)


def _positive_int(text: str) -> int:
    value = _count(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors and exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, help="Scenario file (TOML)")
    common.add_argument("--out", default=OUTPUT_DIR, help=f"Output directory (default: {OUTPUT_DIR})")
    common.add_argument("--seed", type=int, default=None, help="Seed overriding the scenario's")
    common.add_argument("--n", type=_positive_int, default=None, help="Grid size overriding the scenario's")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--log-file", default=None, help="Optional log file (rotated at 10 MB)")

    parser = _Parser(prog="lqg", description="LQG game equilibria and identification")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sub.add_parser("solve", parents=[common], help="Solve the equilibrium and write the spectrum")

    identify = sub.add_parser("identify", parents=[common], help="Identify the canonical structure")
    identify.add_argument("--draws", type=_count, default=None,
                          help="Sample N draws per state instead of exact conditionals")
    identify.add_argument("--positive", action="store_true", default=None,
                          help="Resolve signs under h >= 0")
    identify.add_argument("--theta-bars", type=float, nargs=2, default=None, metavar=("T1", "T2"),
                          help="Conditioning states")

    variance = sub.add_parser("variance", parents=[common], help="Higher-order uncertainty and gap tables")
    variance.add_argument("--teams", default=None, help="Team paths file: one path per line, teams split by ';'")
    variance.add_argument("--theta-bars", type=float, nargs=2, default=None, metavar=("T1", "T2"))

    sweep = sub.add_parser("tax-sweep", parents=[common], help="Revenue curves over tax rates")
    sweep.add_argument("--tau-step", type=float, default=None, help="Tax grid step on [0, 1]")

    roundtrip = sub.add_parser("roundtrip", parents=[common], help="Identify h and re-optimize the tax")
    roundtrip.add_argument("--theta-bars", type=float, nargs=2, default=None, metavar=("T1", "T2"))
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns the process exit code."""
    args = build_parser().parse_args(argv)
    setup_logger(args.log_level, args.log_file)

    try:
        config = ScenarioLoader(args.config).load(n_override=args.n, seed_override=args.seed)
        teams = read_teams_file(args.teams) if getattr(args, "teams", None) else None
        step = getattr(args, "tau_step", None)
        taus = tau_grid(0.0, 1.0, step) if step is not None else None
        theta_bars = getattr(args, "theta_bars", None)
        if theta_bars is not None:
            theta_bars = tuple(theta_bars)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        print(f"lqg: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    pipeline = LQGPipeline(
        config,
        output_dir=args.out,
        draws=getattr(args, "draws", None),
        positive=getattr(args, "positive", None),
        theta_bars=theta_bars,
        teams=teams,
        taus=taus,
    )
    results = pipeline.run(args.command)

    if results["status"] == "success":
        print(pipeline.get_pipeline_summary())
    else:
        print(f"lqg {args.command}: {results['error']}", file=sys.stderr)
    return results["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
