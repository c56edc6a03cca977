"""
IDQF Forwarding Simulator - `compare` Command
BR vs IDQF sweep over interest rates.
"""

from argparse import Namespace
from pathlib import Path

from idqf.commands.common import add_scenario_args, load_scenario, out_dir
from idqf.services.experiment import run_compare
from idqf.services.metrics import export_comparison


def register(subparsers) -> None:
    parser = subparsers.add_parser("compare", help="Sweep BR and IDQF over interest rates")
    add_scenario_args(parser)
    parser.add_argument("--rates", type=float, nargs="+", help="Rates in packets/s (default 100..300)")
    parser.add_argument("--checkpoints", type=Path, help="Use these checkpoints instead of training per rate")
    parser.set_defaults(handler=handle)


def handle(args: Namespace) -> int:
    config = load_scenario(args)
    rows = run_compare(config, args.rates, checkpoints=args.checkpoints)
    export_comparison(rows, out_dir(args))
    return 0
