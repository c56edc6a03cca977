"""
IDQF Forwarding Simulator - `train` Command
"""

from argparse import Namespace
from pathlib import Path
import logging

from idqf.commands.common import add_scenario_args, checkpoint_dir, load_scenario, out_dir
from idqf.services.experiment import run_training
from idqf.services.metrics import export_rewards


logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="Train the agents and write checkpoints plus rewards.csv")
    add_scenario_args(parser)
    parser.add_argument("--checkpoints", type=Path, help="Directory for node-<id>.npz checkpoints")
    parser.set_defaults(handler=handle)


def handle(args: Namespace) -> int:
    config = load_scenario(args)
    target = checkpoint_dir(args)
    logger.info(f"Training agents {config.agents} for {config.episodes} episodes")
    result = run_training(config, checkpoint_dir=target)
    export_rewards(result.rewards, out_dir(args))
    logger.info(f"Checkpoints written to {target}")
    return 0
