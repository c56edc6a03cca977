import pytest
import yaml

from idqf.commands import common
from idqf.commands import run as run_command
from idqf.config import get_settings
from idqf.errors import DivergenceError
from idqf.main import EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK, build_parser, main


def write_scenario(tmp_path, **data):
    path = tmp_path / "scenario.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


def test_flags_override_the_scenario_file(tmp_path):
    path = write_scenario(tmp_path, interest_rate=150, agents=[3], idqf={"reward": "rw1"})
    args = build_parser().parse_args(
        ["run", "--scenario", str(path), "--rate", "250", "--retx-mode", "br_way", "--replay-capacity", "1"]
    )
    config = common.load_scenario(args)
    assert config.interest_rate == 250
    assert config.agents == [3]
    assert (config.idqf.reward, config.idqf.retx_mode) == ("rw1", "br_way")
    assert config.dqn.replay_capacity == 1


def test_settings_supply_the_defaults():
    args = build_parser().parse_args(["run"])
    config = common.load_scenario(args)
    assert config.topology == get_settings().default_topology
    assert config.seed == get_settings().default_seed


def test_shipped_scenarios_validate():
    scenarios = sorted((get_settings().sprint_topology_path.parents[2] / "scenarios").glob("*.yaml"))
    assert scenarios
    for path in scenarios:
        args = build_parser().parse_args(["run", "--scenario", str(path)])
        common.load_scenario(args)


def test_run_writes_result_files(tmp_path):
    path = write_scenario(tmp_path, duration_s=3.0, warmup_s=1.0, strategy="best_route")
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(path), "--out-dir", str(out), "--seed", "3"]) == EXIT_OK
    expected = {"throughput.csv", "delay.csv", "rewards.csv", "delay_cdf.csv", "summary.json"}
    assert {p.name for p in out.iterdir()} == expected
    assert (out / "throughput.csv").read_text().splitlines()[0] == "t,mbps"


def test_unknown_scenario_key_exits_with_config_error(tmp_path):
    path = write_scenario(tmp_path, interest_rate=100, bogus=1)
    assert main(["run", "--scenario", str(path)]) == EXIT_CONFIG


def test_non_mapping_scenario_exits_with_config_error(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    assert main(["run", "--scenario", str(path)]) == EXIT_CONFIG


def test_missing_scenario_file_exits_with_config_error(tmp_path):
    assert main(["run", "--scenario", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG


def test_bad_agent_placement_exits_with_config_error(tmp_path):
    path = write_scenario(tmp_path, agents=[1], duration_s=2.0, warmup_s=1.0)
    assert main(["run", "--scenario", str(path), "--out-dir", str(tmp_path)]) == EXIT_CONFIG


def test_evaluate_without_checkpoints_exits_with_config_error(tmp_path):
    path = write_scenario(tmp_path, duration_s=2.0, warmup_s=1.0)
    args = ["evaluate", "--scenario", str(path), "--checkpoints", str(tmp_path / "none")]
    assert main(args) == EXIT_CONFIG


def test_divergence_exits_with_its_own_code(monkeypatch):
    def diverge(config, spec=None):
        raise DivergenceError("non-finite training loss (inf)", node_id=3, episode=4)

    monkeypatch.setattr(run_command, "run_scenario", diverge)
    assert main(["run"]) == EXIT_DIVERGENCE


def test_unknown_preset_is_rejected_by_the_parser():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["experiment", "bogus"])
