import numpy as np
import pytest

from idqf.errors import ConfigError, DivergenceError
from idqf.schemas import ComparisonRow, MetricsReport, ScenarioConfig
from idqf.services import dqn
from idqf.services.engine import to_ms
from idqf.services.experiment import (
    congested_rate,
    focus_agents,
    load_agent_params,
    run_evaluation,
    run_compare,
    run_delay_cdf,
    run_preset,
    run_scenario,
    run_training,
    validate_scenario,
)
from idqf.services.metrics import delay_cdf, export_comparison, export_csv, export_summary, merge_reports
from idqf.services.topology import analytic_rtt, load_topology

from conftest import diamond_topology


@pytest.fixture(scope="module")
def sprint():
    return load_topology("sprint")


@pytest.fixture(scope="module")
def br_calibration(sprint):
    config = ScenarioConfig(strategy="best_route", agents=[], interest_rate=100, duration_s=60, warmup_s=20, seed=42)
    return run_scenario(config, sprint)


def test_br_throughput_matches_offered_load(br_calibration):
    assert br_calibration.interests_sent == 6000
    assert br_calibration.total_throughput_mbps == pytest.approx(0.82, rel=0.05)
    assert br_calibration.link_drops == 0
    assert br_calibration.consumer_retransmissions == 0


def test_br_delay_matches_per_hop_oracle(sprint, br_calibration):
    oracle = analytic_rtt(sprint, [0, 3, 6, 2, 1], 320, 8200)
    assert br_calibration.avg_app_delay_ms == pytest.approx(to_ms(oracle.total), rel=0.10)


def test_steady_throughput_is_received_bits_over_measured_time(br_calibration):
    steady = sum(point.value for point in br_calibration.throughput_series if point.t >= 20)
    assert br_calibration.total_throughput_mbps == pytest.approx(steady / 40)
    assert br_calibration.total_throughput_mbps <= 2.0
    assert len(br_calibration.throughput_series) == 60


def test_validation_rejects_bad_agent_placement(sprint, make_scenario):
    with pytest.raises(ConfigError):
        validate_scenario(sprint, make_scenario(agents=[42]))
    with pytest.raises(ConfigError):
        validate_scenario(sprint, make_scenario(agents=[0]))
    with pytest.raises(ConfigError):
        validate_scenario(sprint, make_scenario(agents=[1]))
    validate_scenario(sprint, make_scenario())


def test_sprint_focus_and_partner(sprint, make_scenario):
    assert focus_agents(sprint, make_scenario()) == (3, 9)


def test_congested_rate_is_123_percent_of_min_cut(sprint, make_scenario):
    assert congested_rate(sprint, make_scenario()) == 300.0


def test_training_logs_rewards_and_writes_checkpoints(sprint, make_scenario, tmp_path):
    config = make_scenario(agents=[3, 9], episodes=2)
    result = run_training(config, sprint, checkpoint_dir=tmp_path)
    assert [(r.agent, r.episode) for r in result.rewards] == [(3, 0), (9, 0), (3, 1), (9, 1)]
    assert all(np.isfinite(r.cumulative_reward) for r in result.rewards)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["node-3.npz", "node-9.npz"]

    params = load_agent_params(config, tmp_path)
    report = run_evaluation(config.model_copy(update={"replicates": 2}), spec=sprint, params=params, workers=1)
    assert report.replicates == 2
    assert report.interests_sent == 2 * 500

    with pytest.raises(ConfigError):
        load_agent_params(make_scenario(agents=[3, 9], idqf={"features": ["avg_delay"]}), tmp_path)


def test_evaluation_needs_checkpoints(sprint, make_scenario):
    with pytest.raises(ConfigError):
        run_evaluation(make_scenario(), spec=sprint)


def test_decisions_per_episode(sprint, make_scenario):
    config = make_scenario(agents=[3], episodes=1, duration_s=2.0)
    result = run_training(config, sprint)
    # one initial decision plus one per closed epoch
    assert result.agents[3].decisions == pytest.approx(20, abs=1)


def test_divergence_names_episode_and_agent(sprint, make_scenario, monkeypatch):
    def explode(self, experience):
        raise DivergenceError("non-finite training loss (nan)", node_id=self.node_id)

    monkeypatch.setattr(dqn.DqnAgent, "observe", explode)
    with pytest.raises(DivergenceError) as excinfo:
        run_training(make_scenario(agents=[3]), sprint)
    assert excinfo.value.episode == 0
    assert excinfo.value.node_id == 3


def test_agent_splits_traffic_over_its_ranked_faces(make_scenario):
    spec = diamond_topology()
    config = make_scenario(agents=[1], episodes=1, duration_s=3.0)
    report = run_scenario(config, spec)
    shares = {share.face: share.share for share in report.face_shares}
    assert set(shares) <= {2, 3}
    assert sum(shares.values()) == pytest.approx(1.0)


def test_same_seed_gives_identical_csv_files(sprint, make_scenario, tmp_path):
    config = make_scenario(seed=42)
    for run in ("a", "b"):
        export_csv(run_scenario(config, sprint), tmp_path / run)
    for name in ("throughput.csv", "delay.csv", "rewards.csv", "delay_cdf.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_delay_cdf_is_monotone_and_complete(sprint, make_scenario):
    report = run_scenario(make_scenario(agents=[3, 9], episodes=1), sprint)
    cdf = delay_cdf(report.rtt_samples_ms)
    assert not cdf.empty
    for _, rows in cdf.groupby("agent"):
        assert rows["cumulative_fraction"].is_monotonic_increasing
        assert rows["rtt_ms"].is_monotonic_increasing
        assert rows["cumulative_fraction"].iloc[-1] == 1.0


def test_empty_report_writes_headers_only(tmp_path):
    export_csv(MetricsReport(), tmp_path)
    assert (tmp_path / "throughput.csv").read_text() == "t,mbps\n"
    assert (tmp_path / "delay.csv").read_text() == "t,ms\n"
    assert (tmp_path / "rewards.csv").read_text() == "agent,episode,cumulative_reward\n"
    assert (tmp_path / "delay_cdf.csv").read_text() == "agent,rtt_ms,cumulative_fraction\n"


def test_unwritable_output_names_the_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ConfigError, match="file"):
        export_csv(MetricsReport(), blocker)


def test_summary_and_comparison_files(tmp_path):
    export_summary(MetricsReport(total_throughput_mbps=0.82), tmp_path)
    assert '"total_throughput_mbps": 0.82' in (tmp_path / "summary.json").read_text()

    rows = [ComparisonRow(rate=100, br_throughput_mbps=0.8, idqf_throughput_mbps=0.6, br_delay_ms=80, idqf_delay_ms=100)]
    export_comparison(rows, tmp_path)
    lines = (tmp_path / "comparison.csv").read_text().splitlines()
    assert lines[0] == "rate,br_throughput_mbps,idqf_throughput_mbps,br_delay_ms,idqf_delay_ms,throughput_change_pct,delay_change_pct"
    assert lines[1].endswith("-25.000000,25.000000")


def test_merge_averages_and_sums():
    merged = merge_reports(
        [
            MetricsReport(total_throughput_mbps=1.0, interests_sent=10, rtt_samples_ms={3: [1.0]}),
            MetricsReport(total_throughput_mbps=3.0, interests_sent=5, rtt_samples_ms={3: [2.0]}),
        ]
    )
    assert merged.total_throughput_mbps == 2.0
    assert merged.interests_sent == 15
    assert merged.rtt_samples_ms == {3: [1.0, 2.0]}
    assert merged.replicates == 2


def test_non_stationarity_preset_rows_and_summary(sprint, make_scenario):
    config = make_scenario(agents=[3, 9], duration_s=2.0, episodes=2)
    result = run_preset("non-stationarity", config, seeds=[5], spec=sprint)
    assert [(row.variant, row.episode) for row in result.rows] == [
        ("single", 0),
        ("single", 1),
        ("pair", 0),
        ("pair", 1),
    ]
    assert (result.summary["focus_agent"], result.summary["partner_agent"]) == (3.0, 9.0)
    assert result.summary["single_variance"] >= 0.0


def test_delay_cdf_preset_reports_the_analytic_rtt(sprint, make_scenario):
    config = make_scenario(agents=[3, 9], duration_s=2.0, episodes=1)
    result = run_preset("delay-cdf", config, seeds=[5], spec=sprint)
    assert result.summary["rate_pps"] == 300.0
    assert result.summary["analytic_rtt_ms"] == pytest.approx(49.51)
    assert 0.0 <= result.summary["fraction_above_300ms"] <= 1.0
    assert all(row.variant == "N3" for row in result.rows)


def test_unknown_preset_is_a_config_error(sprint, make_scenario):
    with pytest.raises(ConfigError):
        run_preset("bogus", make_scenario(), spec=sprint)


@pytest.mark.slow
def test_agent_learns_the_fast_branch_of_the_diamond(make_scenario):
    spec = diamond_topology(slow_us=200_000)
    config = make_scenario(
        agents=[1],
        episodes=50,
        duration_s=10.0,
        warmup_s=2.0,
        idqf={"delta_t_ms": 1000},
        dqn={"lr": 0.01, "decay_rate": 0.01},
    )
    trained = run_training(config, spec)
    report = run_evaluation(config, spec=spec, params=trained.params())
    shares = {share.face: share.share for share in report.face_shares if share.node == 1}
    assert shares.get(2, 0.0) >= 0.9


@pytest.mark.slow
def test_congested_consumer_side_rtts_exceed_the_analytic_rtt(sprint):
    result, _ = run_delay_cdf(ScenarioConfig(episodes=5, seed=42), sprint, [42])
    summary = result.summary
    assert summary["median_rtt_ms"] >= 2 * summary["analytic_rtt_ms"]
    assert summary["max_rtt_ms"] >= 1000


@pytest.mark.slow
def test_idqf_never_beats_best_route_at_light_load(sprint, make_scenario):
    config = make_scenario(episodes=3, duration_s=10.0, warmup_s=2.0, replicates=5)
    [row] = run_compare(config, rates=[100.0], spec=sprint)
    two_packets_mbps = 2 * config.data_payload_bits / (config.duration_s - config.warmup_s) / 1e6
    assert row.br_throughput_mbps >= row.idqf_throughput_mbps - two_packets_mbps
    assert row.idqf_delay_ms >= row.br_delay_ms - 1e-9


@pytest.mark.slow
def test_a_second_learner_makes_the_focus_rewards_noisier(sprint, make_scenario):
    config = make_scenario(agents=[3, 9], episodes=10, dqn={"decay_rate": 0.005})
    result = run_preset("non-stationarity", config, seeds=[1, 2, 3], spec=sprint)
    assert result.summary["pair_variance"] > result.summary["single_variance"]


@pytest.mark.slow
def test_replay_buffer_steadies_the_rewards(sprint, make_scenario):
    config = make_scenario(agents=[3], episodes=10, dqn={"lr": 0.01, "decay_rate": 0.005})
    result = run_preset("replay-ablation", config, seeds=[1, 2, 3], spec=sprint)
    assert result.summary["no_buffer_variance"] > result.summary["buffer_variance"]
