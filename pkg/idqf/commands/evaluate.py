"""
IDQF Forwarding Simulator - `evaluate` Command
Greedy evaluation of trained checkpoints, optionally swept over rates.
"""

from argparse import Namespace
from pathlib import Path
import logging

from idqf.commands.common import add_scenario_args, checkpoint_dir, load_scenario, out_dir
from idqf.services.experiment import run_compare, run_evaluation
from idqf.services.metrics import export_comparison, export_csv, export_summary


logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("evaluate", help="Evaluate checkpoints without exploration or training")
    add_scenario_args(parser)
    parser.add_argument("--checkpoints", type=Path, help="Directory holding node-<id>.npz checkpoints")
    parser.add_argument("--rates", type=float, nargs="+", help="Also compare against BR at these rates")
    parser.set_defaults(handler=handle)


def handle(args: Namespace) -> int:
    config = load_scenario(args)
    checkpoints = checkpoint_dir(args) if config.uses_agents else None
    target = out_dir(args)

    report = run_evaluation(config, checkpoints)
    export_csv(report, target)
    export_summary(report, target)
    logger.info(
        f"{config.replicates} replicates: {report.total_throughput_mbps:.3f} Mbps, "
        f"{report.avg_app_delay_ms:.2f} ms"
    )

    if args.rates:
        rows = run_compare(config, args.rates, checkpoints=checkpoints)
        export_comparison(rows, target)
    return 0
