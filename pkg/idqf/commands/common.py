"""
IDQF Forwarding Simulator - Shared Command Options
Scenario loading and the flags every subcommand accepts.
"""

from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import Any, Dict
import logging

import yaml

from idqf.config import get_settings
from idqf.errors import ConfigError
from idqf.schemas import ScenarioConfig


logger = logging.getLogger(__name__)


def add_scenario_args(parser: ArgumentParser) -> None:
    parser.add_argument("--scenario", type=Path, help="YAML scenario file")
    parser.add_argument("--topology", help="'sprint', 'grid:RxC', 'tree:DxF' or a .topo path")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out-dir", type=Path, help="Directory for result files")
    parser.add_argument("--episodes", type=int)
    parser.add_argument("--rate", type=float, help="Interest rate (packets/s)")
    parser.add_argument("--strategy", choices=["best_route", "idqf"])
    parser.add_argument("--retx-mode", choices=["br_way", "agent_way"])
    parser.add_argument("--replay-capacity", type=int)
    parser.add_argument("--delta-t-ms", type=float)


def read_scenario_file(path: Path) -> Dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read scenario {path}: {e}") from e
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"scenario {path} is not valid YAML: {e}") from e
    if document is None:
        return {}
    if not isinstance(document, dict):
        raise ConfigError(f"scenario {path} must be a mapping of keys to values")
    return document


def load_scenario(args: Namespace) -> ScenarioConfig:
    """
    Merge the scenario file, the settings defaults and the command-line flags.

    Flags win over the file; the merged document is validated as a whole, so
    an unknown key raises pydantic.ValidationError.
    """
    settings = get_settings()
    data = read_scenario_file(args.scenario) if args.scenario else {}
    data.setdefault("topology", settings.default_topology)
    data.setdefault("seed", settings.default_seed)

    overrides = {
        "topology": args.topology,
        "seed": args.seed,
        "episodes": args.episodes,
        "interest_rate": args.rate,
        "strategy": args.strategy,
    }
    data.update({key: value for key, value in overrides.items() if value is not None})
    if args.retx_mode is not None:
        data.setdefault("idqf", {})["retx_mode"] = args.retx_mode
    if args.delta_t_ms is not None:
        data.setdefault("idqf", {})["delta_t_ms"] = args.delta_t_ms
    if args.replay_capacity is not None:
        data.setdefault("dqn", {})["replay_capacity"] = args.replay_capacity

    config = ScenarioConfig.model_validate(data)
    logger.debug(f"Scenario: {config.model_dump_json()}")
    return config


def out_dir(args: Namespace) -> Path:
    return args.out_dir if args.out_dir is not None else get_settings().out_dir


def checkpoint_dir(args: Namespace) -> Path:
    path = getattr(args, "checkpoints", None)
    return path if path is not None else get_settings().checkpoint_dir
