"""
IDQF Forwarding Simulator - Deep Q-Network Agent
One-hidden-layer Q-network with explicit gradients, experience replay,
epsilon-greedy policy, the DQN training step and model checkpoints.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from idqf.errors import ConfigError, DivergenceError
from idqf.schemas import CheckpointHeader, DqnHyper
from idqf.services.engine import RngStreams


logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "IDQF-CKPT"
CHECKPOINT_VERSION = 1
PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass(slots=True)
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Ring buffer of transitions; capacity 0 keeps only the latest one."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        if capacity < 0:
            raise ValueError("replay capacity must be non-negative")
        self.capacity = capacity
        self.rng = rng
        self.buffer: List[Experience] = []
        self.position = 0
        self.latest: Optional[Experience] = None

    def push(self, experience: Experience) -> None:
        self.latest = experience
        if self.capacity == 0:
            return
        if len(self.buffer) < self.capacity:
            self.buffer.append(experience)
        else:
            self.buffer[self.position] = experience
        self.position = (self.position + 1) % self.capacity

    def __len__(self) -> int:
        return len(self.buffer)

    def ready(self, batch_size: int) -> bool:
        if self.capacity == 0:
            return self.latest is not None
        return len(self.buffer) >= batch_size

    def contents(self) -> List[Experience]:
        """Stored transitions, oldest first."""
        if len(self.buffer) < self.capacity:
            return list(self.buffer)
        return self.buffer[self.position:] + self.buffer[:self.position]

    def sample(self, batch_size: int, rng: Optional[np.random.Generator] = None) -> List[Experience]:
        if self.capacity == 0:
            if self.latest is None:
                raise ValueError("no transition stored yet")
            return [self.latest]
        if len(self.buffer) < batch_size:
            raise ValueError(f"buffer holds {len(self.buffer)} transitions, batch needs {batch_size}")
        rng = rng if rng is not None else self.rng
        indices = rng.choice(len(self.buffer), size=batch_size, replace=False)
        return [self.buffer[i] for i in indices]


class Mlp:
    """Q-network: input -> hidden (ReLU) -> one linear Q-value per action."""

    def __init__(
        self,
        input_dim: int,
        hidden: int,
        actions: int,
        rng: Optional[np.random.Generator] = None,
    ):
        self.input_dim = input_dim
        self.hidden = hidden
        self.actions = actions
        if rng is None:
            self.params: Dict[str, np.ndarray] = {
                "W1": np.zeros((hidden, input_dim)),
                "b1": np.zeros(hidden),
                "W2": np.zeros((actions, hidden)),
                "b2": np.zeros(actions),
            }
        else:
            # He initialisation for the rectifier layer
            self.params = {
                "W1": rng.normal(0.0, math.sqrt(2.0 / input_dim), size=(hidden, input_dim)),
                "b1": np.zeros(hidden),
                "W2": rng.normal(0.0, math.sqrt(1.0 / hidden), size=(actions, hidden)),
                "b2": np.zeros(actions),
            }

    @classmethod
    def from_params(cls, params: Dict[str, np.ndarray]) -> "Mlp":
        hidden, input_dim = params["W1"].shape
        actions = params["W2"].shape[0]
        net = cls(input_dim, hidden, actions)
        net.params = {name: np.array(params[name], dtype=np.float64) for name in PARAM_NAMES}
        return net

    def copy(self) -> "Mlp":
        return Mlp.from_params(self.params)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for a single state."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise ValueError(f"state has shape {x.shape}, network expects ({self.input_dim},)")
        p = self.params
        a1 = np.maximum(p["W1"] @ x + p["b1"], 0.0)
        return p["W2"] @ a1 + p["b2"]

    def forward_batch(self, states: np.ndarray) -> Tuple[np.ndarray, Tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Q-values for a batch, plus what backward() needs."""
        if states.ndim != 2 or states.shape[1] != self.input_dim:
            raise ValueError(f"batch has shape {states.shape}, network expects (*, {self.input_dim})")
        p = self.params
        z1 = states @ p["W1"].T + p["b1"]
        a1 = np.maximum(z1, 0.0)
        q = a1 @ p["W2"].T + p["b2"]
        return q, (states, z1, a1)

    def backward(self, cache: Tuple[np.ndarray, np.ndarray, np.ndarray], dq: np.ndarray) -> Dict[str, np.ndarray]:
        states, z1, a1 = cache
        p = self.params
        da1 = dq @ p["W2"]
        dz1 = da1 * (z1 > 0.0)
        return {
            "W1": dz1.T @ states,
            "b1": dz1.sum(axis=0),
            "W2": dq.T @ a1,
            "b2": dq.sum(axis=0),
        }

    def loss(self, states: np.ndarray, actions: np.ndarray, targets: np.ndarray) -> float:
        q, _ = self.forward_batch(states)
        taken = q[np.arange(len(actions)), actions]
        return float(np.mean((taken - targets) ** 2))

    def loss_and_grads(
        self,
        states: np.ndarray,
        actions: np.ndarray,
        targets: np.ndarray,
    ) -> Tuple[float, Dict[str, np.ndarray]]:
        """Mean squared error on the taken actions' Q-values and its gradient."""
        q, cache = self.forward_batch(states)
        rows = np.arange(len(actions))
        error = q[rows, actions] - targets
        dq = np.zeros_like(q)
        dq[rows, actions] = 2.0 * error / len(actions)
        return float(np.mean(error ** 2)), self.backward(cache, dq)

    def apply_gradients(self, grads: Dict[str, np.ndarray], lr: float) -> None:
        for name in PARAM_NAMES:
            self.params[name] -= lr * grads[name]

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(self.params[name])) for name in PARAM_NAMES)


def epsilon_at(step: int, hyper: DqnHyper) -> float:
    """Exponentially decaying exploration rate after ``step`` agent decisions."""
    if step < 0:
        raise ValueError("step must be non-negative")
    return hyper.eps_min + (hyper.eps_start - hyper.eps_min) * math.exp(-hyper.decay_rate * step)


def act(net: Mlp, state: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy action; greedy ties go to the lowest index."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {eps}")
    if eps > 0.0 and rng.random() < eps:
        return int(rng.integers(net.actions))
    return int(np.argmax(net.forward(state)))


def train_step(
    net: Mlp,
    buffer: ReplayBuffer,
    hyper: DqnHyper,
    rng: np.random.Generator,
    target_net: Optional[Mlp] = None,
) -> float:
    """
    One gradient step on a sampled mini-batch.

    Returns:
        Mean squared TD error of the batch before the update

    Raises:
        DivergenceError: if the loss or the updated parameters are not finite
    """
    batch = buffer.sample(hyper.batch_size, rng)
    states = np.stack([e.state for e in batch])
    actions = np.array([e.action for e in batch], dtype=np.int64)
    rewards = np.array([e.reward for e in batch], dtype=np.float64)
    next_states = np.stack([e.next_state for e in batch])
    terminals = np.array([e.terminal for e in batch], dtype=np.float64)

    bootstrap = target_net if target_net is not None else net
    next_q, _ = bootstrap.forward_batch(next_states)
    targets = rewards + hyper.gamma * next_q.max(axis=1) * (1.0 - terminals)
    if hyper.q_learning_rate < 1.0:
        current, _ = net.forward_batch(states)
        taken = current[np.arange(len(actions)), actions]
        targets = taken + hyper.q_learning_rate * (targets - taken)

    loss, grads = net.loss_and_grads(states, actions, targets)
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite training loss ({loss})")
    net.apply_gradients(grads, hyper.lr)
    if not net.is_finite():
        raise DivergenceError("network parameters became non-finite")
    return loss


class DqnAgent:
    """Independent learner owned by one router."""

    def __init__(
        self,
        node_id: int,
        input_dim: int,
        actions: int,
        hyper: DqnHyper,
        streams: RngStreams,
        features: Sequence[str],
        reward: str,
    ):
        self.node_id = node_id
        self.hyper = hyper
        self.features = list(features)
        self.reward_kind = reward
        self.net = Mlp(input_dim, hyper.hidden, actions, rng=streams.stream(node_id, "weights"))
        self.target_net = self.net.copy() if hyper.target_sync_every else None
        self.buffer = ReplayBuffer(hyper.replay_capacity, streams.stream(node_id, "replay"))
        self.rng = streams.stream(node_id, "exploration")
        self.training = True
        self.decisions = 0
        self.train_steps = 0
        self.last_loss: Optional[float] = None

    @property
    def input_dim(self) -> int:
        return self.net.input_dim

    @property
    def actions(self) -> int:
        return self.net.actions

    def choose(self, state: np.ndarray) -> int:
        """Pick an action; exploration only while training."""
        if not self.training:
            return act(self.net, state, 0.0, self.rng)
        eps = epsilon_at(self.decisions, self.hyper)
        self.decisions += 1
        return act(self.net, state, eps, self.rng)

    def observe(self, experience: Experience) -> Optional[float]:
        """Store a transition and, while training, take one gradient step."""
        if experience.action >= self.actions:
            raise ValueError(f"action {experience.action} out of range for {self.actions} faces")
        if not self.training:
            return None
        self.buffer.push(experience)
        if not self.buffer.ready(self.hyper.batch_size):
            return None
        try:
            self.last_loss = train_step(self.net, self.buffer, self.hyper, self.buffer.rng, self.target_net)
        except DivergenceError as e:
            raise DivergenceError(e.reason, node_id=self.node_id) from e
        self.train_steps += 1
        if self.target_net is not None and self.train_steps % self.hyper.target_sync_every == 0:
            self.target_net = self.net.copy()
        return self.last_loss

    def header(self) -> CheckpointHeader:
        return CheckpointHeader(
            node_id=self.node_id,
            input_dim=self.input_dim,
            hidden=self.net.hidden,
            actions=self.actions,
            features=self.features,
            reward=self.reward_kind,
            decisions=self.decisions,
            hyper=self.hyper,
        )

    def load_params(self, params: Dict[str, np.ndarray]) -> None:
        net = Mlp.from_params(params)
        if (net.input_dim, net.hidden, net.actions) != (self.input_dim, self.net.hidden, self.actions):
            raise ConfigError(
                f"checkpoint for N{self.node_id} has dims {net.input_dim}->{net.hidden}->{net.actions}, "
                f"scenario needs {self.input_dim}->{self.net.hidden}->{self.actions}"
            )
        self.net = net
        if self.target_net is not None:
            self.target_net = net.copy()


def save_checkpoint(agent: DqnAgent, path: Path) -> Path:
    """Write the agent's weights and header to ``path`` (.npz)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez(
            f,
            magic=np.array(f"{CHECKPOINT_MAGIC}/{CHECKPOINT_VERSION}"),
            header=np.array(agent.header().model_dump_json()),
            **agent.net.params,
        )
    logger.info(f"Checkpoint for N{agent.node_id} written to {path}")
    return path


def load_checkpoint(path: Path) -> Tuple[CheckpointHeader, Dict[str, np.ndarray]]:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        ConfigError: for a missing file, wrong magic or unsupported version
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as archive:
        magic = str(archive["magic"].item()) if "magic" in archive.files else ""
        name, _, version = magic.partition("/")
        if name != CHECKPOINT_MAGIC:
            raise ConfigError(f"{path} is not an IDQF checkpoint")
        if version != str(CHECKPOINT_VERSION):
            raise ConfigError(f"{path}: unsupported checkpoint version {version}")
        header = CheckpointHeader.model_validate_json(str(archive["header"].item()))
        params = {name: np.array(archive[name]) for name in PARAM_NAMES}
    return header, params
