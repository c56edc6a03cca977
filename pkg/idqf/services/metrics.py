"""
IDQF Forwarding Simulator - Metrics and Result Files
Builds MetricsReports from finished episodes, merges replicates and writes the
CSV / JSON result files.
"""

from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence
import logging

import numpy as np
import pandas as pd

from idqf.errors import ConfigError
from idqf.schemas import ComparisonRow, FaceShare, MetricsReport, PresetResult, RewardRecord, SeriesPoint
from idqf.services.engine import NS_PER_S, from_seconds, to_ms
from idqf.services.network import Network


logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.6f"


def _mean_std(values: Sequence[float]) -> tuple:
    if not values:
        return 0.0, 0.0
    array = np.asarray(values, dtype=np.float64)
    return float(array.mean()), float(array.std())


class MetricsCollector:
    """
    Consumer-side and agent-side measurements of one episode.

    Args:
        monitored: Nodes whose RTT samples and face shares are reported
            (defaults to the scenario's agent placement)
    """

    def __init__(self, network: Network, monitored: Optional[Iterable[int]] = None):
        self.network = network
        config = network.config
        self.monitored = sorted(monitored if monitored is not None else config.agents)
        self.duration_s = int(np.ceil(config.duration_s))
        self.warmup_s = config.warmup_s

    def _series(self) -> tuple:
        bits = np.zeros(self.duration_s, dtype=np.int64)
        delay_sum = np.zeros(self.duration_s, dtype=np.float64)
        delay_count = np.zeros(self.duration_s, dtype=np.int64)
        for consumer in self.network.consumers.values():
            for arrival, payload in consumer.state.received:
                bits[min(arrival // NS_PER_S, self.duration_s - 1)] += payload
            for arrival, delay in consumer.state.delay_samples:
                second = min(arrival // NS_PER_S, self.duration_s - 1)
                delay_sum[second] += to_ms(delay)
                delay_count[second] += 1
        throughput = [SeriesPoint(t=t, value=bits[t] / 1e6) for t in range(self.duration_s)]
        delay = [
            SeriesPoint(t=t, value=delay_sum[t] / delay_count[t])
            for t in range(self.duration_s)
            if delay_count[t]
        ]
        return throughput, delay

    def report(self) -> MetricsReport:
        network = self.network
        config = network.config
        warmup = from_seconds(self.warmup_s)
        throughput, delay = self._series()

        steady_bits = 0
        steady_delays: List[float] = []
        interests_sent = retransmissions = received = 0
        for consumer in network.consumers.values():
            state = consumer.state
            steady_bits += sum(payload for arrival, payload in state.received if arrival >= warmup)
            steady_delays += [to_ms(d) for arrival, d in state.delay_samples if arrival >= warmup]
            interests_sent += state.interests_sent
            retransmissions += state.retransmissions
            received += state.data_received

        steady_throughput = [point.value for point in throughput if point.t >= self.warmup_s]
        steady_delay_series = [point.value for point in delay if point.t >= self.warmup_s]
        tp_mean, tp_std = _mean_std(steady_throughput)
        d_mean, d_std = _mean_std(steady_delay_series)

        rewards = [
            RewardRecord(agent=node_id, episode=network.episode, cumulative_reward=strategy.cumulative_reward)
            for node_id, strategy in sorted(network.agent_strategies().items())
        ]

        rtt_samples = {
            node_id: [to_ms(rtt) for rtt in network.strategies[node_id].rtt_log]
            for node_id in self.monitored
            if node_id in network.strategies
        }

        face_shares = []
        for node_id in self.monitored:
            node = network.nodes.get(node_id)
            if node is None:
                continue
            total = sum(node.counters.per_face.values())
            for face_id in sorted(node.counters.per_face):
                face_shares.append(
                    FaceShare(
                        node=node_id,
                        face=face_id,
                        peer=node.faces[face_id].peer,
                        share=node.counters.per_face[face_id] / total,
                    )
                )

        counters = [node.counters for node in network.nodes.values()]
        return MetricsReport(
            throughput_series=throughput,
            delay_series=delay,
            throughput_mean_mbps=tp_mean,
            throughput_std_mbps=tp_std,
            delay_mean_ms=d_mean,
            delay_std_ms=d_std,
            total_throughput_mbps=steady_bits / (config.duration_s - self.warmup_s) / 1e6,
            avg_app_delay_ms=float(np.mean(steady_delays)) if steady_delays else 0.0,
            rewards=rewards,
            rtt_samples_ms=rtt_samples,
            face_shares=face_shares,
            interests_sent=interests_sent,
            consumer_retransmissions=retransmissions,
            data_received=received,
            link_drops=network.link_drops,
            router_retransmissions=sum(c.router_retransmissions for c in counters),
            unsolicited_data=sum(c.unsolicited for c in counters),
            no_route_drops=sum(c.no_route for c in counters),
        )


def merge_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    """
    Combine replicate reports, given in seed order.

    Series and scalar measurements are averaged, counts are summed, and
    samples and reward records are concatenated.
    """
    if not reports:
        raise ValueError("no reports to merge")
    if len(reports) == 1:
        return reports[0]

    def merge_series(attr: str) -> List[SeriesPoint]:
        buckets: Dict[int, List[float]] = defaultdict(list)
        for report in reports:
            for point in getattr(report, attr):
                buckets[point.t].append(point.value)
        return [SeriesPoint(t=t, value=float(np.mean(values))) for t, values in sorted(buckets.items())]

    def mean_of(attr: str) -> float:
        return float(np.mean([getattr(report, attr) for report in reports]))

    def sum_of(attr: str) -> int:
        return int(sum(getattr(report, attr) for report in reports))

    rtt_samples: Dict[int, List[float]] = defaultdict(list)
    shares: Dict[tuple, List[float]] = defaultdict(list)
    for report in reports:
        for node_id, samples in report.rtt_samples_ms.items():
            rtt_samples[node_id].extend(samples)
        for share in report.face_shares:
            shares[(share.node, share.face, share.peer)].append(share.share)

    return MetricsReport(
        throughput_series=merge_series("throughput_series"),
        delay_series=merge_series("delay_series"),
        throughput_mean_mbps=mean_of("throughput_mean_mbps"),
        throughput_std_mbps=mean_of("throughput_std_mbps"),
        delay_mean_ms=mean_of("delay_mean_ms"),
        delay_std_ms=mean_of("delay_std_ms"),
        total_throughput_mbps=mean_of("total_throughput_mbps"),
        avg_app_delay_ms=mean_of("avg_app_delay_ms"),
        rewards=[record for report in reports for record in report.rewards],
        rtt_samples_ms=dict(sorted(rtt_samples.items())),
        face_shares=[
            FaceShare(node=node, face=face, peer=peer, share=sum(values) / len(reports))
            for (node, face, peer), values in sorted(shares.items(), key=lambda item: item[0][:2])
        ],
        interests_sent=sum_of("interests_sent"),
        consumer_retransmissions=sum_of("consumer_retransmissions"),
        data_received=sum_of("data_received"),
        link_drops=sum_of("link_drops"),
        router_retransmissions=sum_of("router_retransmissions"),
        unsolicited_data=sum_of("unsolicited_data"),
        no_route_drops=sum_of("no_route_drops"),
        replicates=sum(report.replicates for report in reports),
    )


def delay_cdf(samples_ms: Dict[int, List[float]]) -> pd.DataFrame:
    """Empirical RTT CDF per agent; the last row of every agent is 1.0."""
    rows = []
    for agent in sorted(samples_ms):
        ordered = sorted(samples_ms[agent])
        count = len(ordered)
        rows += [(agent, rtt, (i + 1) / count) for i, rtt in enumerate(ordered)]
    return pd.DataFrame(rows, columns=["agent", "rtt_ms", "cumulative_fraction"])


def fraction_above(samples_ms: Sequence[float], threshold_ms: float) -> float:
    if not samples_ms:
        return 0.0
    return sum(1 for rtt in samples_ms if rtt > threshold_ms) / len(samples_ms)


def _write_frame(frame: pd.DataFrame, path: Path) -> Path:
    try:
        frame.to_csv(path, index=False, lineterminator="\n", float_format=FLOAT_FORMAT, encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}") from e
    return path


def _prepare(out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {out_dir}: {e}") from e
    return out_dir


def export_csv(report: MetricsReport, out_dir: Path) -> List[Path]:
    """
    Write throughput.csv, delay.csv, rewards.csv and delay_cdf.csv.

    Raises:
        ConfigError: naming the path that could not be written
    """
    out_dir = _prepare(out_dir)
    frames = {
        "throughput.csv": pd.DataFrame(
            [(p.t, p.value) for p in report.throughput_series], columns=["t", "mbps"]
        ),
        "delay.csv": pd.DataFrame([(p.t, p.value) for p in report.delay_series], columns=["t", "ms"]),
        "rewards.csv": pd.DataFrame(
            [(r.agent, r.episode, r.cumulative_reward) for r in report.rewards],
            columns=["agent", "episode", "cumulative_reward"],
        ),
        "delay_cdf.csv": delay_cdf(report.rtt_samples_ms),
    }
    paths = [_write_frame(frame, out_dir / name) for name, frame in frames.items()]
    logger.info(f"Wrote {len(paths)} CSV files to {out_dir}")
    return paths


def export_rewards(rewards: Sequence[RewardRecord], out_dir: Path) -> Path:
    out_dir = _prepare(out_dir)
    frame = pd.DataFrame(
        [(r.agent, r.episode, r.cumulative_reward) for r in rewards],
        columns=["agent", "episode", "cumulative_reward"],
    )
    return _write_frame(frame, out_dir / "rewards.csv")


def export_summary(report: MetricsReport, out_dir: Path) -> Path:
    """Write the report's scalar totals as summary.json."""
    out_dir = _prepare(out_dir)
    path = out_dir / "summary.json"
    summary = report.model_dump_json(
        indent=2, exclude={"throughput_series", "delay_series", "rewards", "rtt_samples_ms"}
    )
    try:
        path.write_text(summary + "\n", encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}") from e
    return path


def export_comparison(rows: Sequence[ComparisonRow], out_dir: Path) -> Path:
    out_dir = _prepare(out_dir)
    frame = pd.DataFrame(
        [
            {
                **row.model_dump(),
                "throughput_change_pct": row.throughput_change_pct,
                "delay_change_pct": row.delay_change_pct,
            }
            for row in rows
        ],
        columns=[
            "rate",
            "br_throughput_mbps",
            "idqf_throughput_mbps",
            "br_delay_ms",
            "idqf_delay_ms",
            "throughput_change_pct",
            "delay_change_pct",
        ],
    )
    return _write_frame(frame, out_dir / "comparison.csv")


def export_preset(result: PresetResult, out_dir: Path) -> List[Path]:
    """Write ``<name>.csv`` (all rows) and ``<name>.json`` (headline numbers)."""
    out_dir = _prepare(out_dir)
    frame = pd.DataFrame(
        [row.model_dump() for row in result.rows],
        columns=["variant", "seed", "episode", "metric", "value"],
    )
    csv_path = _write_frame(frame, out_dir / f"{result.name}.csv")
    json_path = out_dir / f"{result.name}.json"
    try:
        json_path.write_text(result.model_dump_json(indent=2, exclude={"rows"}) + "\n", encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot write {json_path}: {e}") from e
    return [csv_path, json_path]
