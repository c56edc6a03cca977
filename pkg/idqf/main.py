"""
IDQF Forwarding Simulator - Command-Line Entry Point
"""

from argparse import ArgumentParser
from typing import List, Optional
import logging
import sys

from pydantic import ValidationError

from idqf import __version__
from idqf.commands import compare, evaluate, experiment, run, train
from idqf.config import get_settings
from idqf.errors import ConfigError, DivergenceError


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3


def configure_logging() -> None:
    settings = get_settings()
    logging.basicConfig(level=settings.log_level, format=settings.log_format)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="idqf",
        description="Discrete-event NDN forwarding simulator with best_route and IDQF strategies.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Register commands
    for command in (run, train, evaluate, compare, experiment):
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error(f"Invalid scenario: {e}")
        return EXIT_CONFIG
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except DivergenceError as e:
        logger.error(f"Training aborted: {e}")
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
