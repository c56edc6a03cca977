"""
IDQF Forwarding Simulator - Pydantic Schemas for Scenarios and Reports
"""

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Dict, List, Literal, Optional


StrategyName = Literal["best_route", "idqf"]
RetxMode = Literal["br_way", "agent_way"]
RewardKind = Literal["rw", "rw1", "delay"]
FeatureName = Literal["avg_delay", "satisfaction_ratio", "retx_ratio", "retx_diff"]

# Order in which enabled features are laid out inside one face block
FEATURE_ORDER: List[str] = ["avg_delay", "satisfaction_ratio", "retx_ratio", "retx_diff"]


# Strategy and learning configuration
class IdqfConfig(BaseModel):
    """Settings of the agent-driven forwarding strategy."""
    model_config = ConfigDict(extra="forbid")

    delta_t_ms: float = Field(default=100.0, gt=0, description="Decision epoch length")
    retx_mode: RetxMode = "agent_way"
    features: List[FeatureName] = Field(
        default_factory=lambda: ["avg_delay", "satisfaction_ratio", "retx_diff"],
        min_length=1,
    )
    reward: RewardKind = "rw"
    top_k_faces: int = Field(default=2, ge=2)
    delay_cap_s: float = Field(default=2.0, gt=0, description="Avg-delay feature clip")
    retx_diff_scale: float = Field(default=64.0, gt=0, description="Retx-difference divisor")

    @field_validator("features")
    @classmethod
    def _canonical_features(cls, value: List[str]) -> List[str]:
        if len(set(value)) != len(value):
            raise ValueError("features must not repeat")
        return [name for name in FEATURE_ORDER if name in value]


class DqnHyper(BaseModel):
    """DQN hyperparameters shared by every agent of a scenario."""
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(default=0.001, gt=0, description="Network weight step size")
    q_learning_rate: float = Field(
        default=1.0, gt=0, le=1, description="Blend between old Q and the DQN target"
    )
    gamma: float = Field(default=0.9, ge=0, lt=1)
    eps_start: float = Field(default=1.0, gt=0, le=1)
    eps_min: float = Field(default=0.05, gt=0, le=1)
    decay_rate: float = Field(default=0.001, ge=0)
    batch_size: int = Field(default=16, ge=1)
    replay_capacity: int = Field(default=1000, ge=0, description="0 trains on the latest transition only")
    hidden: int = Field(default=32, ge=1)
    penalty_c_s: float = Field(default=4.0, ge=0, description="RW drop penalty C (seconds)")
    cm: float = Field(default=4000.0, ge=0, description="RW1 constant multiplier")
    r_thrs: int = Field(default=0, ge=0, description="RW1 retransmission threshold")
    target_sync_every: int = Field(default=0, ge=0, description="0 disables the target network")

    @model_validator(mode="after")
    def _check_exploration(self) -> "DqnHyper":
        if self.eps_min > self.eps_start:
            raise ValueError("eps_min must not exceed eps_start")
        return self


class ScenarioConfig(BaseModel):
    """Full description of one experiment."""
    model_config = ConfigDict(extra="forbid")

    name: str = "sprint"
    topology: str = Field(
        default="sprint",
        description="'sprint', 'grid:RxC', 'tree:DxF' or a path to a .topo file",
    )
    interest_rate: float = Field(default=100.0, gt=0, description="Interests per second")
    interest_size_bits: int = Field(default=320, gt=0)
    data_payload_bits: int = Field(default=8200, gt=0)
    duration_s: float = Field(default=60.0, gt=0, description="Seconds per episode")
    episodes: int = Field(default=50, ge=1)
    seed: int = Field(default=42, ge=0)
    strategy: StrategyName = Field(default="idqf", description="Strategy of the agent nodes")
    agents: List[int] = Field(default_factory=lambda: [3, 4, 6, 9])
    idqf: IdqfConfig = Field(default_factory=IdqfConfig)
    dqn: DqnHyper = Field(default_factory=DqnHyper)
    retx_timeout_s: float = Field(default=1.0, gt=0)
    pit_lifetime_s: float = Field(default=2.0, gt=0)
    cs_capacity: int = Field(default=0, ge=0)
    warmup_s: float = Field(default=20.0, ge=0)
    replicates: int = Field(default=5, ge=1)
    compare_rates: List[float] = Field(default_factory=lambda: [100.0, 150.0, 200.0, 250.0, 300.0])

    @field_validator("agents")
    @classmethod
    def _unique_agents(cls, value: List[int]) -> List[int]:
        if len(set(value)) != len(value):
            raise ValueError("agent placement lists a node twice")
        return sorted(value)

    @model_validator(mode="after")
    def _check_warmup(self) -> "ScenarioConfig":
        if self.warmup_s >= self.duration_s:
            raise ValueError("warmup_s must be shorter than duration_s")
        return self

    @property
    def uses_agents(self) -> bool:
        return self.strategy == "idqf" and bool(self.agents)


# Report Schemas
class SeriesPoint(BaseModel):
    """One per-second sample of a time series."""
    t: int
    value: float


class RewardRecord(BaseModel):
    """Cumulative reward of one agent over one episode."""
    agent: int
    episode: int
    cumulative_reward: float


class FaceShare(BaseModel):
    """Fraction of a node's forwarded interests sent on one face."""
    node: int
    face: int
    peer: Optional[int] = None
    share: float


class MetricsReport(BaseModel):
    """Consumer-side and agent-side measurements of a run."""
    throughput_series: List[SeriesPoint] = Field(default_factory=list)
    delay_series: List[SeriesPoint] = Field(default_factory=list)
    throughput_mean_mbps: float = 0.0
    throughput_std_mbps: float = 0.0
    delay_mean_ms: float = 0.0
    delay_std_ms: float = 0.0
    total_throughput_mbps: float = 0.0
    avg_app_delay_ms: float = 0.0
    rewards: List[RewardRecord] = Field(default_factory=list)
    rtt_samples_ms: Dict[int, List[float]] = Field(default_factory=dict)
    face_shares: List[FaceShare] = Field(default_factory=list)
    interests_sent: int = 0
    consumer_retransmissions: int = 0
    data_received: int = 0
    link_drops: int = 0
    router_retransmissions: int = 0
    unsolicited_data: int = 0
    no_route_drops: int = 0
    replicates: int = 1


class ComparisonRow(BaseModel):
    """BR vs IDQF result at one interest rate."""
    rate: float
    br_throughput_mbps: float
    idqf_throughput_mbps: float
    br_delay_ms: float
    idqf_delay_ms: float

    @property
    def throughput_change_pct(self) -> float:
        if self.br_throughput_mbps == 0:
            return 0.0
        return 100.0 * (self.idqf_throughput_mbps - self.br_throughput_mbps) / self.br_throughput_mbps

    @property
    def delay_change_pct(self) -> float:
        if self.br_delay_ms == 0:
            return 0.0
        return 100.0 * (self.idqf_delay_ms - self.br_delay_ms) / self.br_delay_ms


class CheckpointHeader(BaseModel):
    """Metadata stored next to an agent's weights."""
    node_id: int
    input_dim: int
    hidden: int
    actions: int
    features: List[FeatureName]
    reward: RewardKind
    decisions: int = 0
    hyper: DqnHyper


PresetName = Literal[
    "non-stationarity",
    "replay-ablation",
    "delay-cdf",
    "training-length",
    "episode-count",
    "learning-rate",
]


class PresetRow(BaseModel):
    """One measurement of a challenge experiment."""
    variant: str
    seed: int
    episode: Optional[int] = None
    metric: str
    value: float


class PresetResult(BaseModel):
    """Rows and headline numbers of a challenge experiment."""
    name: PresetName
    rows: List[PresetRow] = Field(default_factory=list)
    summary: Dict[str, float] = Field(default_factory=dict)
