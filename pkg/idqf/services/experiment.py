"""
IDQF Forwarding Simulator - Experiment Harness
Scenario validation, the training and evaluation loops, the BR vs IDQF rate
sweep and the challenge experiment presets.
"""

from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from idqf.config import get_settings
from idqf.errors import ConfigError, DivergenceError, TopologyError
from idqf.schemas import (
    ComparisonRow,
    MetricsReport,
    PresetResult,
    PresetRow,
    RewardRecord,
    ScenarioConfig,
)
from idqf.services.dqn import DqnAgent, load_checkpoint, save_checkpoint
from idqf.services.engine import RngStreams, to_ms
from idqf.services.metrics import MetricsCollector, fraction_above, merge_reports
from idqf.services.network import Network
from idqf.services.topology import (
    TopologySpec,
    analytic_rtt,
    best_path,
    bottleneck_capacity,
    compute_fib,
    load_topology,
)


logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]

# Offered load of the congested delay run, relative to min-cut capacity
CONGESTION_FACTOR = 1.23
# RTT threshold reported by the delay-cdf experiment
SLOW_RTT_MS = 300.0


def validate_scenario(spec: TopologySpec, config: ScenarioConfig) -> None:
    """
    Check that ``config`` can run on ``spec``.

    Raises:
        ConfigError: missing or co-located applications, bad agent placement
        TopologyError: disconnected graph
    """
    if not spec.consumers:
        raise ConfigError("topology declares no consumer")
    if not spec.producers:
        raise ConfigError("topology declares no producer")
    consumer_nodes = {app.node for app in spec.consumers}
    producer_nodes = {app.node for app in spec.producers}
    if consumer_nodes & producer_nodes:
        raise ConfigError(f"consumer and producer share nodes {sorted(consumer_nodes & producer_nodes)}")
    if not spec.is_connected():
        raise TopologyError("topology graph is not connected")

    if not config.uses_agents:
        return
    graph = spec.graph()
    k = config.idqf.top_k_faces
    for node_id in config.agents:
        if node_id not in graph:
            raise ConfigError(f"agent placed on unknown node N{node_id}")
        if node_id in producer_nodes:
            raise ConfigError(f"agent placed on producer node N{node_id}")
        if graph.degree(node_id) < k:
            raise ConfigError(f"agent N{node_id} has {graph.degree(node_id)} faces, needs at least {k}")


def resolve_topology(config: ScenarioConfig, spec: Optional[TopologySpec] = None) -> TopologySpec:
    spec = spec if spec is not None else load_topology(config.topology)
    validate_scenario(spec, config)
    return spec


def build_agents(config: ScenarioConfig, seed: Optional[int] = None) -> Dict[int, DqnAgent]:
    """Fresh agents for every placed node; empty unless the scenario uses IDQF."""
    if not config.uses_agents:
        return {}
    streams = RngStreams(config.seed if seed is None else seed)
    k = config.idqf.top_k_faces
    input_dim = k * len(config.idqf.features)
    return {
        node_id: DqnAgent(node_id, input_dim, k, config.dqn, streams, config.idqf.features, config.idqf.reward)
        for node_id in config.agents
    }


def save_agents(agents: Dict[int, DqnAgent], checkpoint_dir: Path) -> List[Path]:
    return [
        save_checkpoint(agent, Path(checkpoint_dir) / f"node-{node_id}.npz")
        for node_id, agent in sorted(agents.items())
    ]


def load_agent_params(config: ScenarioConfig, checkpoint_dir: Path) -> Dict[int, Params]:
    """
    Load one checkpoint per agent node and check it against the scenario.

    Raises:
        ConfigError: missing file, or dims / features that do not match
    """
    k = config.idqf.top_k_faces
    expected = (k * len(config.idqf.features), config.dqn.hidden, k)
    params: Dict[int, Params] = {}
    for node_id in config.agents:
        path = Path(checkpoint_dir) / f"node-{node_id}.npz"
        header, weights = load_checkpoint(path)
        found = (header.input_dim, header.hidden, header.actions)
        if header.node_id != node_id:
            raise ConfigError(f"{path} belongs to N{header.node_id}, not N{node_id}")
        if found != expected or list(header.features) != list(config.idqf.features):
            raise ConfigError(
                f"{path} was trained with dims {found} and features {header.features}, "
                f"scenario needs {expected} and {config.idqf.features}"
            )
        params[node_id] = weights
    return params


def run_episode(
    spec: TopologySpec,
    config: ScenarioConfig,
    agents: Dict[int, DqnAgent],
    episode: int = 0,
    seed: Optional[int] = None,
    monitored: Optional[Sequence[int]] = None,
) -> MetricsReport:
    """Simulate one episode and measure it."""
    network = Network(spec, config, agents, episode=episode, seed=seed)
    try:
        network.run()
    except DivergenceError as e:
        logger.error(f"Training diverged in episode {episode}: {e.reason}")
        raise DivergenceError(e.reason, node_id=e.node_id, episode=episode) from e
    return MetricsCollector(network, monitored).report()


@dataclass
class TrainingResult:
    agents: Dict[int, DqnAgent]
    rewards: List[RewardRecord] = field(default_factory=list)
    final_report: Optional[MetricsReport] = None

    def params(self) -> Dict[int, Params]:
        return {node_id: agent.net.params for node_id, agent in self.agents.items()}

    def rewards_of(self, node_id: int) -> List[float]:
        return [record.cumulative_reward for record in self.rewards if record.agent == node_id]


def run_training(
    config: ScenarioConfig,
    spec: Optional[TopologySpec] = None,
    checkpoint_dir: Optional[Path] = None,
) -> TrainingResult:
    """
    Train every agent over ``config.episodes`` episodes.

    Each episode starts from an empty network; agent weights, replay buffers
    and exploration schedules carry over.
    """
    if not config.uses_agents:
        raise ConfigError("training needs strategy 'idqf' and at least one agent")
    spec = resolve_topology(config, spec)
    result = TrainingResult(agents=build_agents(config))

    for episode in range(config.episodes):
        report = run_episode(spec, config, result.agents, episode)
        result.rewards.extend(report.rewards)
        result.final_report = report
        rewards = ", ".join(f"N{r.agent}={r.cumulative_reward:.3f}" for r in report.rewards)
        logger.info(f"Episode {episode + 1}/{config.episodes}: throughput {report.total_throughput_mbps:.3f} Mbps, rewards {rewards}")

    if checkpoint_dir is not None:
        save_agents(result.agents, checkpoint_dir)
    return result


def run_scenario(config: ScenarioConfig, spec: Optional[TopologySpec] = None) -> MetricsReport:
    """
    Online run of a scenario.

    With agents, trains for ``config.episodes`` and reports the last episode
    with the reward log of every episode; without, simulates one episode.
    """
    spec = resolve_topology(config, spec)
    if not config.uses_agents:
        return run_episode(spec, config, {})
    result = run_training(config, spec)
    return result.final_report.model_copy(update={"rewards": result.rewards})


def _evaluate_replicate(job: Tuple[TopologySpec, ScenarioConfig, Dict[int, Params], int]) -> MetricsReport:
    spec, config, params, seed = job
    agents = build_agents(config, seed)
    for node_id, agent in agents.items():
        agent.load_params(params[node_id])
        agent.training = False
    return run_episode(spec, config, agents, 0, seed=seed)


def run_evaluation(
    config: ScenarioConfig,
    checkpoints: Optional[Path] = None,
    spec: Optional[TopologySpec] = None,
    params: Optional[Dict[int, Params]] = None,
    workers: Optional[int] = None,
) -> MetricsReport:
    """
    Greedy evaluation over ``config.replicates`` seeds (seed, seed+1, ...).

    Replicates are independent; with more than one worker they run in a
    process pool and are merged in seed order.
    """
    spec = resolve_topology(config, spec)
    if config.uses_agents and params is None:
        if checkpoints is None:
            raise ConfigError("evaluating an idqf scenario needs checkpoints")
        params = load_agent_params(config, checkpoints)
    params = params or {}

    jobs = [(spec, config, params, config.seed + r) for r in range(config.replicates)]
    workers = workers if workers is not None else get_settings().workers
    if workers > 1 and len(jobs) > 1:
        with Pool(min(workers, len(jobs))) as pool:
            reports = pool.map(_evaluate_replicate, jobs)
    else:
        reports = [_evaluate_replicate(job) for job in jobs]
    return merge_reports(reports)


def run_compare(
    config: ScenarioConfig,
    rates: Optional[Sequence[float]] = None,
    checkpoints: Optional[Path] = None,
    spec: Optional[TopologySpec] = None,
) -> List[ComparisonRow]:
    """
    BR vs IDQF at every rate.

    IDQF uses the given checkpoints, or agents freshly trained at each rate.
    """
    spec = resolve_topology(config, spec)
    rows = []
    for rate in rates or config.compare_rates:
        rated = config.model_copy(update={"interest_rate": rate})
        br = run_evaluation(rated.model_copy(update={"strategy": "best_route"}), spec=spec)
        learned = rated.model_copy(update={"strategy": "idqf"})
        if checkpoints is not None:
            params = load_agent_params(learned, checkpoints)
        else:
            params = run_training(learned, spec).params()
        idqf = run_evaluation(learned, spec=spec, params=params)
        rows.append(
            ComparisonRow(
                rate=rate,
                br_throughput_mbps=br.total_throughput_mbps,
                idqf_throughput_mbps=idqf.total_throughput_mbps,
                br_delay_ms=br.avg_app_delay_ms,
                idqf_delay_ms=idqf.avg_app_delay_ms,
            )
        )
        logger.info(f"Rate {rate:g} pps: BR {br.total_throughput_mbps:.3f} Mbps vs IDQF {idqf.total_throughput_mbps:.3f} Mbps")
    return rows


# Challenge experiments
def focus_agents(spec: TopologySpec, config: ScenarioConfig) -> Tuple[int, Optional[int]]:
    """
    The consumer-side agent and the agent behind its second-ranked face.

    The consumer-side agent is the first agent on the consumer's best path.
    """
    if not config.agents:
        raise ConfigError("this experiment needs at least one agent")
    consumer = spec.consumers[0]
    fib = compute_fib(spec, config.agents, config.idqf.top_k_faces)
    path = best_path(fib, consumer.node, consumer.prefix)
    focus = next((node_id for node_id in path if node_id in config.agents), config.agents[0])
    partner = next(
        (
            route.peer
            for route in reversed(fib[focus][consumer.prefix])
            if route.peer in config.agents and route.peer != focus
        ),
        None,
    )
    return focus, partner


def _variance(values: Sequence[float]) -> float:
    return float(np.var(values, ddof=1)) if len(values) > 1 else 0.0


def _reward_rows(variant: str, seed: int, values: Sequence[float]) -> List[PresetRow]:
    return [
        PresetRow(variant=variant, seed=seed, episode=episode, metric="cumulative_reward", value=value)
        for episode, value in enumerate(values)
    ]


def _reward_variance_preset(
    name: str,
    variants: Dict[str, ScenarioConfig],
    spec: TopologySpec,
    seeds: Sequence[int],
    focus: int,
) -> PresetResult:
    result = PresetResult(name=name)
    for variant, base in variants.items():
        variances = []
        for seed in seeds:
            trained = run_training(base.model_copy(update={"seed": seed}), spec)
            rewards = trained.rewards_of(focus)
            result.rows += _reward_rows(variant, seed, rewards)
            variances.append(_variance(rewards))
        result.summary[f"{variant}_variance"] = float(np.mean(variances))
    return result


def _deployment_preset(
    name: str,
    variants: Dict[str, Tuple[ScenarioConfig, ScenarioConfig]],
    spec: TopologySpec,
    seeds: Sequence[int],
) -> PresetResult:
    """Train each variant, then evaluate it greedily under the shared evaluation config."""
    result = PresetResult(name=name)
    for variant, (train_config, eval_config) in variants.items():
        throughputs, delays = [], []
        for seed in seeds:
            trained = run_training(train_config.model_copy(update={"seed": seed}), spec)
            report = run_evaluation(eval_config.model_copy(update={"seed": seed}), spec=spec, params=trained.params())
            for metric, value in (
                ("throughput_mbps", report.total_throughput_mbps),
                ("delay_ms", report.avg_app_delay_ms),
            ):
                result.rows.append(PresetRow(variant=variant, seed=seed, metric=metric, value=value))
            throughputs.append(report.total_throughput_mbps)
            delays.append(report.avg_app_delay_ms)
        result.summary[f"{variant}_throughput_mbps"] = float(np.mean(throughputs))
        result.summary[f"{variant}_delay_ms"] = float(np.mean(delays))
    return result


def congested_rate(spec: TopologySpec, config: ScenarioConfig) -> float:
    """Smallest whole rate offering at least CONGESTION_FACTOR x the min-cut capacity."""
    capacity = bottleneck_capacity(spec, spec.consumers[0].node, spec.producers[0].node)
    return float(math.ceil(CONGESTION_FACTOR * capacity / config.data_payload_bits - 1e-9))


def run_delay_cdf(
    config: ScenarioConfig,
    spec: TopologySpec,
    seeds: Sequence[int],
) -> Tuple[PresetResult, MetricsReport]:
    """Congested run measuring the consumer-side agent's RTT distribution."""
    focus, _ = focus_agents(spec, config)
    rate = max(config.interest_rate, congested_rate(spec, config))
    congested = config.model_copy(update={"interest_rate": rate})

    fib = compute_fib(spec, congested.agents, congested.idqf.top_k_faces)
    prefix = spec.consumers[0].prefix
    oracle = analytic_rtt(
        spec, best_path(fib, focus, prefix), congested.interest_size_bits, congested.data_payload_bits
    )

    reports = []
    for seed in seeds:
        seeded = congested.model_copy(update={"seed": seed, "replicates": 1})
        if seeded.uses_agents:
            params = run_training(seeded, spec).params()
            reports.append(run_evaluation(seeded, spec=spec, params=params))
        else:
            reports.append(run_evaluation(seeded, spec=spec))
    report = merge_reports(reports)

    samples = report.rtt_samples_ms.get(focus, [])
    result = PresetResult(name="delay-cdf")
    result.rows = [
        PresetRow(variant=f"N{focus}", seed=config.seed, metric="rtt_ms", value=rtt) for rtt in sorted(samples)
    ]
    result.summary = {
        "rate_pps": rate,
        "analytic_rtt_ms": to_ms(oracle.propagation),
        "analytic_rtt_with_serialization_ms": to_ms(oracle.total),
        "median_rtt_ms": float(np.median(samples)) if samples else 0.0,
        "max_rtt_ms": max(samples) if samples else 0.0,
        "fraction_above_300ms": fraction_above(samples, SLOW_RTT_MS),
    }
    return result, report


def run_preset(
    name: str,
    config: ScenarioConfig,
    seeds: Optional[Sequence[int]] = None,
    spec: Optional[TopologySpec] = None,
) -> PresetResult:
    """
    Run one challenge experiment.

    Args:
        name: One of the PresetName values
        seeds: Seeds to repeat the experiment over (default: seed, seed+1, seed+2)
    """
    spec = resolve_topology(config, spec)
    seeds = list(seeds) if seeds else [config.seed + i for i in range(3)]
    learned = config.model_copy(update={"strategy": "idqf"})
    logger.info(f"Running experiment '{name}' over seeds {seeds}")

    if name == "non-stationarity":
        focus, partner = focus_agents(spec, learned)
        if partner is None:
            raise ConfigError(f"no second agent behind a ranked face of N{focus}")
        result = _reward_variance_preset(
            name,
            {
                "single": learned.model_copy(update={"agents": [focus]}),
                "pair": learned.model_copy(update={"agents": sorted([focus, partner])}),
            },
            spec,
            seeds,
            focus,
        )
        result.summary["focus_agent"] = float(focus)
        result.summary["partner_agent"] = float(partner)
        return result

    if name == "replay-ablation":
        focus, _ = focus_agents(spec, learned)
        capacity = learned.dqn.replay_capacity or 1000
        return _reward_variance_preset(
            name,
            {
                "no_buffer": learned.model_copy(update={"dqn": learned.dqn.model_copy(update={"replay_capacity": 0})}),
                "buffer": learned.model_copy(
                    update={"dqn": learned.dqn.model_copy(update={"replay_capacity": capacity})}
                ),
            },
            spec,
            seeds,
            focus,
        )

    if name == "delay-cdf":
        result, _ = run_delay_cdf(config, spec, seeds)
        return result

    if name == "training-length":
        longer = learned.model_copy(update={"duration_s": 3 * learned.duration_s})
        return _deployment_preset(
            name, {"short": (learned, learned), "long": (longer, learned)}, spec, seeds
        )

    if name == "episode-count":
        single = learned.model_copy(
            update={"duration_s": learned.duration_s * learned.episodes, "episodes": 1}
        )
        return _deployment_preset(
            name, {"many_short": (learned, learned), "one_long": (single, learned)}, spec, seeds
        )

    if name == "learning-rate":
        faster = learned.model_copy(update={"dqn": learned.dqn.model_copy(update={"lr": learned.dqn.lr * 10})})
        return _deployment_preset(
            name, {"base_lr": (learned, learned), "high_lr": (faster, learned)}, spec, seeds
        )

    raise ConfigError(f"unknown experiment: {name}")
