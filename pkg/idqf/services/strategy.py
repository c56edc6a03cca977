"""
IDQF Forwarding Simulator - Forwarding Strategies
The best_route baseline and the agent-driven IDQF strategy with decision
epochs and both retransmission handling modes.
"""

from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Tuple
import logging

import numpy as np

from idqf.schemas import DqnHyper, IdqfConfig
from idqf.services.dqn import DqnAgent, Experience
from idqf.services.engine import EventKind, SimTime, Simulator, from_ms, to_seconds, Event
from idqf.services.ndn import Data, Face, FibEntry, Forwarder, Interest, Name, OutRecord, PitEntry
from idqf.services.rewards import (
    FaceSignals,
    extract_features,
    retx_diff,
    retx_ratio,
    reward_delay,
    reward_rw,
    reward_rw1,
)


logger = logging.getLogger(__name__)

LAST_DELAYS = 5


def br_choose(
    fib: FibEntry,
    entry: Optional[PitEntry],
    is_retx: bool,
    now: SimTime,
) -> Optional[Face]:
    """
    best_route face selection.

    New interests take the lowest-cost face. A retransmission takes the
    lowest-cost face without a live out-record, or else the face used most
    recently. Faces the interest arrived on are never candidates.
    """
    excluded = set(entry.in_records) if entry is not None else set()
    candidates = [hop.face for hop in fib.next_hops if hop.face.id not in excluded]
    if not candidates:
        return None
    if not is_retx or entry is None:
        return candidates[0]

    for face in candidates:
        record = entry.out_records.get(face.id)
        if record is None or record.expires_at <= now:
            return face

    return max(candidates, key=lambda face: entry.out_records[face.id].sent_at)


class ForwardingStrategy(ABC):
    """Per-node forwarding policy; one instance per node per episode."""

    name: str = "strategy"

    def __init__(self):
        # RTT (ns) of every data packet matched to an out-record at this node
        self.rtt_log: List[SimTime] = []

    @abstractmethod
    def choose_face(
        self,
        node: Forwarder,
        fib: FibEntry,
        entry: PitEntry,
        interest: Interest,
        is_retx: bool,
        now: SimTime,
    ) -> Optional[Face]:
        """Pick the upstream face for an interest, or None to drop it."""

    def after_receive_data(
        self,
        node: Forwarder,
        in_face: Face,
        data: Data,
        out_record: Optional[OutRecord],
        now: SimTime,
    ) -> None:
        if out_record is not None:
            self.rtt_log.append(now - out_record.sent_at)

    def on_entry_expired(self, node: Forwarder, entry: PitEntry, now: SimTime) -> None:
        pass

    def start_episode(self, node: Forwarder, now: SimTime) -> None:
        pass

    def finish_episode(self, node: Forwarder, now: SimTime) -> None:
        pass


class BestRouteStrategy(ForwardingStrategy):
    """Lowest-cost face for new interests, unused faces for retransmissions."""

    name = "best_route"

    def choose_face(self, node, fib, entry, interest, is_retx, now):
        return br_choose(fib, entry, is_retx, now)


@dataclass
class EpochStats:
    """Counters of one decision epoch at one agent."""
    epoch_start: SimTime
    action: int
    chosen_face: Face
    rtt_samples: List[float] = field(default_factory=list)
    r: int = 0
    n: int = 0
    r_by_face: Dict[int, int] = field(default_factory=dict)
    satisfied: Dict[int, int] = field(default_factory=dict)
    forwarded: Dict[int, int] = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.rtt_samples)


class IdqfStrategy(ForwardingStrategy):
    """
    Agent-driven forwarding.

    Every decision epoch the agent observes per-face features, is rewarded for
    its previous choice, trains, and picks the face that carries every new
    interest until the next epoch.
    """

    name = "idqf"

    def __init__(
        self,
        agent: DqnAgent,
        config: IdqfConfig,
        hyper: DqnHyper,
        simulator: Simulator,
    ):
        super().__init__()
        self.agent = agent
        self.config = config
        self.hyper = hyper
        self.simulator = simulator
        self.delta_t = from_ms(config.delta_t_ms)
        self.faces: List[Face] = []
        self.stats: Optional[EpochStats] = None
        self.cumulative_reward = 0.0
        self.decisions = 0
        self.epoch_rewards: List[float] = []
        self._node: Optional[Forwarder] = None
        self._last_delays: Dict[int, Deque[float]] = {}
        self._last_satisfaction: Dict[int, float] = {}
        self._last_diff: Dict[int, float] = {}
        self._prev_state: Optional[np.ndarray] = None
        self._prev_action = 0
        self._guard: Optional[Event] = None
        # name -> (face id of the first transmission, eviction time once the PIT entry is gone)
        self._original: Dict[Name, Tuple[int, Optional[SimTime]]] = {}

    def start_episode(self, node: Forwarder, now: SimTime) -> None:
        if not node.fib:
            raise ValueError(f"N{node.node_id} has no FIB entry to learn over")
        fib = next(iter(node.fib.values()))
        self.faces = [hop.face for hop in fib.next_hops[: self.config.top_k_faces]]
        if len(self.faces) != self.agent.actions:
            raise ValueError(
                f"N{node.node_id} offers {len(self.faces)} faces, agent expects {self.agent.actions}"
            )
        self._node = node
        self._last_delays = {face.id: deque(maxlen=LAST_DELAYS) for face in self.faces}
        self._last_satisfaction = {face.id: 1.0 for face in self.faces}
        self._last_diff = {face.id: 0.0 for face in self.faces}
        state = self._state(None)
        action = self.agent.choose(state)
        self.decisions += 1
        self._prev_state, self._prev_action = state, action
        self._begin_epoch(now, action)

    def finish_episode(self, node: Forwarder, now: SimTime) -> None:
        if self.stats is not None:
            self._close_epoch(now, terminal=True)

    def _begin_epoch(self, now: SimTime, action: int) -> None:
        self.stats = EpochStats(now, action, self.faces[action])
        if self._guard is not None:
            Simulator.cancel(self._guard)
        self._guard = self.simulator.call_at(
            now + 2 * self.delta_t, EventKind.DECISION_EPOCH, self._on_guard, self.stats
        )

    def _on_guard(self, stats: EpochStats) -> None:
        if self.stats is stats:
            self._close_epoch(self.simulator.now)

    def _roll_epoch(self, now: SimTime) -> None:
        if self.stats is not None and now >= self.stats.epoch_start + self.delta_t:
            self._close_epoch(now)

    def _signals(self, stats: Optional[EpochStats]) -> List[FaceSignals]:
        signals = []
        for face in self.faces:
            delays = self._last_delays[face.id]
            avg_delay = sum(delays) / len(delays) if delays else 0.0
            if stats is None:
                signals.append(FaceSignals(avg_delay, self._last_satisfaction[face.id], 0.0, self._last_diff[face.id]))
                continue
            forwarded = stats.forwarded.get(face.id, 0)
            if forwarded:
                satisfaction = stats.satisfied.get(face.id, 0) / forwarded
            else:
                satisfaction = self._last_satisfaction[face.id]
            ratio = retx_ratio(stats.r_by_face.get(face.id, 0), stats.r)
            if face.id == stats.chosen_face.id:
                diff = float(retx_diff(stats.r, stats.n))
            else:
                diff = self._last_diff[face.id]
            signals.append(FaceSignals(avg_delay, satisfaction, ratio, diff))
        return signals

    def _state(self, stats: Optional[EpochStats]) -> np.ndarray:
        signals = self._signals(stats)
        if stats is not None:
            for face, signal in zip(self.faces, signals):
                self._last_satisfaction[face.id] = signal.satisfaction
                self._last_diff[face.id] = signal.retx_diff
        return extract_features(
            signals,
            self.config.features,
            delay_cap_s=self.config.delay_cap_s,
            retx_diff_scale=self.config.retx_diff_scale,
        )

    def _reward(self, stats: EpochStats) -> float:
        if self.config.reward == "rw":
            return reward_rw(stats.rtt_samples, stats.m, stats.r, self.hyper.penalty_c_s)
        if self.config.reward == "rw1":
            avg_d = 1000.0 * sum(stats.rtt_samples) / stats.m if stats.m else 0.0
            return reward_rw1(
                avg_d,
                stats.r,
                stats.n,
                stats.r_by_face.get(stats.chosen_face.id, 0),
                self.hyper.cm,
                self.hyper.r_thrs,
            )
        return reward_delay(stats.rtt_samples)

    def _close_epoch(self, now: SimTime, terminal: bool = False) -> None:
        stats = self.stats
        next_state = self._state(stats)
        reward = self._reward(stats)
        self.cumulative_reward += reward
        self.epoch_rewards.append(reward)
        self.agent.observe(Experience(self._prev_state, self._prev_action, reward, next_state, terminal))
        self._evict_originals(now)

        if terminal:
            self.stats = None
            if self._guard is not None:
                Simulator.cancel(self._guard)
                self._guard = None
            return

        action = self.agent.choose(next_state)
        self.decisions += 1
        self._prev_state, self._prev_action = next_state, action
        logger.debug(f"N{self.agent.node_id}: epoch closed at {now}ns, reward={reward:.4f}, next face index {action}")
        self._begin_epoch(now, action)

    def _evict_originals(self, now: SimTime) -> None:
        stale = [name for name, (_, evict_at) in self._original.items() if evict_at is not None and evict_at <= now]
        for name in stale:
            del self._original[name]

    def _release_original(self, name: Name, now: SimTime) -> None:
        tagged = self._original.get(name)
        if tagged is not None:
            self._original[name] = (tagged[0], now + self.delta_t)

    def choose_face(self, node, fib, entry, interest, is_retx, now):
        self._roll_epoch(now)
        stats = self.stats

        if is_retx and self.config.retx_mode == "br_way":
            face = br_choose(fib, entry, is_retx, now)
        else:
            face = self._agent_face(fib, entry, stats.action)
        if face is None:
            return None

        name = interest.name
        if not is_retx:
            self._original[name] = (face.id, None)
        # R, R_j and N only count interests sent through the chosen face
        if face.id == stats.chosen_face.id:
            if is_retx:
                stats.r += 1
                original = self._original.get(name, (face.id, None))[0]
                stats.r_by_face[original] = stats.r_by_face.get(original, 0) + 1
            else:
                stats.n += 1
        stats.forwarded[face.id] = stats.forwarded.get(face.id, 0) + 1
        return face

    def _agent_face(self, fib, entry, action: int) -> Optional[Face]:
        """The agent's face, or the best other ranked face when that one leads back downstream."""
        hops = fib.next_hops[: self.config.top_k_faces]
        downstream = set(entry.in_records) if entry is not None else set()
        preferred = hops[action] if action < len(hops) else hops[0]
        if preferred.face.id not in downstream:
            return preferred.face
        return next((hop.face for hop in hops if hop.face.id not in downstream), None)

    def record_data_feedback(self, data: Data, out_record: OutRecord, now: SimTime) -> None:
        """Fold one returning data packet into the per-face delay and satisfaction counters."""
        stats = self.stats
        face_id = out_record.face.id
        rtt = to_seconds(now - out_record.sent_at)
        if face_id in self._last_delays:
            self._last_delays[face_id].append(rtt)
        if stats is None:
            return
        if out_record.sent_at >= stats.epoch_start:
            forwarded = stats.forwarded.get(face_id, 0)
            stats.satisfied[face_id] = min(stats.satisfied.get(face_id, 0) + 1, forwarded)
        if face_id == stats.chosen_face.id:
            stats.rtt_samples.append(rtt)

    def after_receive_data(self, node, in_face, data, out_record, now):
        super().after_receive_data(node, in_face, data, out_record, now)
        self._release_original(data.name, now)
        if out_record is not None:
            self.record_data_feedback(data, out_record, now)

    def on_entry_expired(self, node, entry, now):
        self._release_original(entry.name, now)
