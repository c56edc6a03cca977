"""
IDQF Forwarding Simulator - `run` Command
Runs one scenario online and writes its CSV files.
"""

from argparse import Namespace
import logging

from idqf.commands.common import add_scenario_args, load_scenario, out_dir
from idqf.services.experiment import run_scenario
from idqf.services.metrics import export_csv, export_summary


logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("run", help="Run a scenario and write throughput/delay/reward/CDF CSVs")
    add_scenario_args(parser)
    parser.set_defaults(handler=handle)


def handle(args: Namespace) -> int:
    config = load_scenario(args)
    logger.info(f"Running scenario '{config.name}' ({config.strategy}, {config.interest_rate:g} pps)")
    report = run_scenario(config)
    target = out_dir(args)
    export_csv(report, target)
    export_summary(report, target)
    logger.info(
        f"Throughput {report.total_throughput_mbps:.3f} Mbps, "
        f"avg app delay {report.avg_app_delay_ms:.2f} ms"
    )
    return 0
