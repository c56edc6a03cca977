"""
IDQF Forwarding Simulator - Consumer and Producer Applications
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple
import logging

import numpy as np

from idqf.services.engine import Event, EventKind, NS_PER_S, SimTime, Simulator
from idqf.services.ndn import DEFAULT_DATA_BITS, DEFAULT_INTEREST_BITS, Data, Forwarder, Interest, Name


logger = logging.getLogger(__name__)


@dataclass(slots=True)
class Outstanding:
    first_issued_at: SimTime
    last_tx_at: SimTime
    tx_count: int = 1
    timer: Optional[Event] = None


@dataclass
class ConsumerState:
    """Everything the consumer knows about its own requests."""
    prefix: str
    next_seq: int = 0
    outstanding: Dict[int, Outstanding] = field(default_factory=dict)
    # (arrival time, first-issue-to-arrival delay) per received data
    delay_samples: List[Tuple[SimTime, SimTime]] = field(default_factory=list)
    # (arrival time, payload bits) per received data
    received: List[Tuple[SimTime, int]] = field(default_factory=list)
    interests_sent: int = 0
    retransmissions: int = 0

    @property
    def data_received(self) -> int:
        return len(self.received)


def _nonce(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**32))


def consumer_tick(
    state: ConsumerState,
    now: SimTime,
    rng: np.random.Generator,
    size_bits: int = DEFAULT_INTEREST_BITS,
) -> Interest:
    """Issue the interest for the next sequence number."""
    seq = state.next_seq
    state.next_seq += 1
    state.outstanding[seq] = Outstanding(first_issued_at=now, last_tx_at=now)
    state.interests_sent += 1
    return Interest(Name(state.prefix, seq), _nonce(rng), now, size_bits)


def consumer_retx_check(
    state: ConsumerState,
    now: SimTime,
    retx_timeout: SimTime,
    rng: np.random.Generator,
    size_bits: int = DEFAULT_INTEREST_BITS,
    seqs: Optional[Iterable[int]] = None,
) -> List[Interest]:
    """
    Retransmit every outstanding name whose last transmission is at least
    ``retx_timeout`` old.

    Args:
        seqs: Restrict the check to these sequence numbers (all when None)

    Returns:
        The retransmitted interests, each with a fresh nonce
    """
    candidates = state.outstanding.keys() if seqs is None else seqs
    interests = []
    for seq in sorted(candidates):
        pending = state.outstanding.get(seq)
        if pending is None or pending.last_tx_at + retx_timeout > now:
            continue
        pending.last_tx_at = now
        pending.tx_count += 1
        state.retransmissions += 1
        interests.append(Interest(Name(state.prefix, seq), _nonce(rng), now, size_bits))
    return interests


class ConsumerApp:
    """Constant-rate requester with a repeating per-name retransmission timer."""

    def __init__(
        self,
        node: Forwarder,
        simulator: Simulator,
        prefix: str,
        rate: float,
        rng: np.random.Generator,
        retx_timeout: SimTime,
        stop_at: SimTime,
        interest_bits: int = DEFAULT_INTEREST_BITS,
    ):
        if rate <= 0:
            raise ValueError(f"interest rate must be positive, got {rate}")
        self.node = node
        self.simulator = simulator
        self.rate = rate
        self.rng = rng
        self.retx_timeout = retx_timeout
        self.stop_at = stop_at
        self.interest_bits = interest_bits
        self.state = ConsumerState(prefix)

    def send_time(self, k: int) -> SimTime:
        return int(round(k * NS_PER_S / self.rate))

    def start(self) -> None:
        self._schedule_tick(0)

    def _schedule_tick(self, k: int) -> None:
        fire_at = self.send_time(k)
        if fire_at < self.stop_at:
            self.simulator.call_at(fire_at, EventKind.CONSUMER_SEND, self._tick, k)

    def _tick(self, k: int) -> None:
        now = self.simulator.now
        interest = consumer_tick(self.state, now, self.rng, self.interest_bits)
        self._arm_timer(interest.name.seq, now)
        self.node.on_interest(self.node.app_face, interest, now)
        self._schedule_tick(k + 1)

    def _arm_timer(self, seq: int, now: SimTime) -> None:
        pending = self.state.outstanding[seq]
        pending.timer = self.simulator.call_at(now + self.retx_timeout, EventKind.TIMER, self._on_timeout, seq)

    def _on_timeout(self, seq: int) -> None:
        now = self.simulator.now
        for interest in consumer_retx_check(self.state, now, self.retx_timeout, self.rng, self.interest_bits, [seq]):
            self._arm_timer(seq, now)
            self.node.on_interest(self.node.app_face, interest, now)

    def deliver(self, data: Data, now: SimTime) -> bool:
        """Accept a data packet; duplicates of already satisfied names are ignored."""
        pending = self.state.outstanding.pop(data.name.seq, None)
        if pending is None:
            return False
        if pending.timer is not None:
            Simulator.cancel(pending.timer)
        self.state.delay_samples.append((now, now - pending.first_issued_at))
        self.state.received.append((now, data.payload_bits))
        return True


class ProducerApp:
    """Answers every interest under its prefix immediately."""

    def __init__(self, node: Forwarder, prefix: str, payload_bits: int = DEFAULT_DATA_BITS):
        self.node = node
        self.prefix = prefix
        self.payload_bits = payload_bits
        self.served = 0

    def on_interest(self, interest: Interest, now: SimTime) -> None:
        if interest.name.prefix != self.prefix:
            logger.debug(f"N{self.node.node_id}: producer ignores {interest.name}")
            return
        self.served += 1
        self.node.on_data(self.node.app_face, Data(interest.name, self.payload_bits), now)
