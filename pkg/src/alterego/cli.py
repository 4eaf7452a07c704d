"""Command line entry point: ``alterego generate|train|backtest|report|run``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ._csv import ParseError
from .pipeline import STAGES, ConfigError, Run, RunConfig

log = logging.getLogger("alterego")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default ./out)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="alterego", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a synthetic market and investor cohort")
    sub.add_parser("train", parents=[common], help="fit the rolling forecast models")
    sub.add_parser("backtest", parents=[common], help="run the robo-investors and compute spreads")
    sub.add_parser("report", parents=[common], help="summary tables, regressions and figures")
    sub.add_parser("run", parents=[common], help="all four stages in order")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        config = RunConfig.load(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            config.seed = args.seed
        run = Run(config, args.out, args.threads)
        stages = list(STAGES) if args.command == "run" else [args.command]
        for name in stages:
            log.info("stage %s", name)
            STAGES[name](run)
    except (ConfigError, ParseError, FileNotFoundError, ValueError, KeyError) as err:
        print(f"alterego {args.command}: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
