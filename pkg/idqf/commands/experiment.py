"""
IDQF Forwarding Simulator - `experiment` Command
Challenge experiments: non-stationarity, replay ablation, delay CDF and the
training-schedule comparisons.
"""

from argparse import Namespace
from typing import get_args
import logging

from idqf.commands.common import add_scenario_args, load_scenario, out_dir
from idqf.schemas import PresetName
from idqf.services.experiment import run_preset
from idqf.services.metrics import export_preset


logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("experiment", help="Run a challenge experiment preset")
    parser.add_argument("preset", choices=list(get_args(PresetName)))
    add_scenario_args(parser)
    parser.add_argument("--seeds", type=int, nargs="+", help="Seeds to repeat over (default: 3 from --seed)")
    parser.set_defaults(handler=handle)


def handle(args: Namespace) -> int:
    config = load_scenario(args)
    result = run_preset(args.preset, config, args.seeds)
    export_preset(result, out_dir(args))
    for key, value in result.summary.items():
        logger.info(f"{args.preset}: {key} = {value:.6g}")
    return 0
