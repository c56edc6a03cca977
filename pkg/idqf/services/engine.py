"""
IDQF Forwarding Simulator - Discrete-Event Engine
Integer-nanosecond clock, ordered event queue, seeded random substreams and
drop-tail link transmission.
"""

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Deque, Dict, List, Optional, Tuple
import hashlib
import heapq
import itertools
import logging

import numpy as np

from idqf.errors import ConfigError


logger = logging.getLogger(__name__)

SimTime = int

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


def from_seconds(seconds: float) -> SimTime:
    return int(round(seconds * NS_PER_S))


def from_ms(ms: float) -> SimTime:
    return int(round(ms * NS_PER_MS))


def from_us(us: int) -> SimTime:
    return int(us) * NS_PER_US


def to_seconds(t: SimTime) -> float:
    return t / NS_PER_S


def to_ms(t: SimTime) -> float:
    return t / NS_PER_MS


def serialization_time(size_bits: int, bandwidth_bps: int) -> SimTime:
    """Time to clock ``size_bits`` onto a link, rounded up to whole nanoseconds."""
    return -(-size_bits * NS_PER_S // bandwidth_bps)


class EventKind(str, Enum):
    """What an event stands for; only used for tracing and debugging."""
    PACKET_ARRIVAL = "packet-arrival"
    TIMER = "timer"
    DECISION_EPOCH = "decision-epoch"
    PIT_EXPIRY = "pit-expiry"
    CONSUMER_SEND = "consumer-send"


@dataclass(order=True, slots=True)
class Event:
    """A callback due at ``fire_at``; ``(fire_at, seq)`` orders all events."""
    fire_at: SimTime
    kind: EventKind = field(compare=False)
    action: Callable[..., None] = field(compare=False)
    args: Tuple[Any, ...] = field(default=(), compare=False)
    seq: int = -1
    cancelled: bool = field(default=False, compare=False)


class Simulator:
    """Single-threaded event loop. One instance per episode."""

    def __init__(self, record_trace: bool = False):
        self.now: SimTime = 0
        self.processed = 0
        self._queue: List[Event] = []
        self._seq = itertools.count()
        self._trace = hashlib.blake2b(digest_size=16) if record_trace else None

    def schedule(self, event: Event) -> Event:
        """
        Insert an event into the queue.

        The sequence number is assigned here, so events due at the same
        instant fire in the order they were scheduled.

        Raises:
            ConfigError: if the event is due before the current clock
        """
        if event.fire_at < self.now:
            raise ConfigError(
                f"cannot schedule {event.kind.value} at t={event.fire_at}ns, clock is at {self.now}ns"
            )
        event.seq = next(self._seq)
        heapq.heappush(self._queue, event)
        return event

    def call_at(self, fire_at: SimTime, kind: EventKind, action: Callable[..., None], *args: Any) -> Event:
        return self.schedule(Event(fire_at, kind, action, args))

    def call_later(self, delay: SimTime, kind: EventKind, action: Callable[..., None], *args: Any) -> Event:
        return self.schedule(Event(self.now + delay, kind, action, args))

    @staticmethod
    def cancel(event: Event) -> None:
        event.cancelled = True

    @property
    def pending(self) -> int:
        return len(self._queue)

    @property
    def trace_digest(self) -> Optional[str]:
        """Digest over every processed (fire_at, seq, kind), when tracing is on."""
        return self._trace.hexdigest() if self._trace is not None else None

    def run_until(self, t_end: SimTime) -> int:
        """
        Process every event due at or before ``t_end``.

        Returns:
            Number of events processed (cancelled events are not counted)
        """
        queue = self._queue
        trace = self._trace
        count = 0
        while queue and queue[0].fire_at <= t_end:
            event = heapq.heappop(queue)
            if event.cancelled:
                continue
            self.now = event.fire_at
            if trace is not None:
                trace.update(f"{event.fire_at}:{event.seq}:{event.kind.value};".encode())
            event.action(*event.args)
            count += 1
        if t_end > self.now:
            self.now = t_end
        self.processed += count
        return count


class RngStreams:
    """
    Deterministic random substreams keyed by (episode, node, purpose).

    Each key gets its own ``numpy`` generator, so adding an agent on one node
    never shifts the draws seen by another node.
    """

    PURPOSES: Dict[str, int] = {
        "exploration": 0,
        "replay": 1,
        "weights": 2,
        "traffic": 3,
    }

    def __init__(self, seed: int):
        self.seed = seed

    def stream(self, node_id: int, purpose: str, episode: int = 0) -> np.random.Generator:
        if purpose not in self.PURPOSES:
            raise KeyError(f"unknown random stream purpose: {purpose}")
        sequence = np.random.SeedSequence(
            entropy=self.seed,
            spawn_key=(episode, node_id, self.PURPOSES[purpose]),
        )
        return np.random.default_rng(sequence)


@dataclass(frozen=True)
class LinkSpec:
    """Static link parameters."""
    delay_us: int
    bandwidth_bps: int
    queue_capacity: int = 100

    def __post_init__(self):
        if self.delay_us <= 0:
            raise ConfigError(f"link delay must be positive, got {self.delay_us}us")
        if self.bandwidth_bps <= 0:
            raise ConfigError(f"link bandwidth must be positive, got {self.bandwidth_bps}bps")
        if self.queue_capacity < 1:
            raise ConfigError(f"queue capacity must be at least 1, got {self.queue_capacity}")


@dataclass(slots=True)
class _Direction:
    next_free: SimTime = 0
    # Serialization completion times of packets not yet fully sent
    backlog: Deque[SimTime] = field(default_factory=deque)
    offered: int = 0
    delivered: int = 0
    dropped: int = 0


class LinkState:
    """A full-duplex link with an independent drop-tail FIFO per direction."""

    def __init__(self, spec: LinkSpec, a: int, b: int):
        self.spec = spec
        self.endpoints = (a, b)
        self._delay_ns = from_us(spec.delay_us)
        self._directions: Dict[int, _Direction] = {a: _Direction(), b: _Direction()}

    def peer_of(self, node_id: int) -> int:
        a, b = self.endpoints
        return b if node_id == a else a

    def _direction(self, sender: int) -> _Direction:
        try:
            return self._directions[sender]
        except KeyError:
            raise ValueError(f"node {sender} is not an endpoint of link {self.endpoints}") from None

    def queued(self, sender: int, now: SimTime) -> int:
        direction = self._direction(sender)
        backlog = direction.backlog
        while backlog and backlog[0] <= now:
            backlog.popleft()
        return len(backlog)

    def next_free(self, sender: int) -> SimTime:
        return self._direction(sender).next_free

    def transmit(self, sender: int, size_bits: int, now: SimTime) -> Optional[SimTime]:
        """
        Offer a packet to the sender's queue.

        Returns:
            Arrival time at the peer, or None when the queue is full
        """
        if size_bits <= 0:
            raise ValueError(f"packet size must be positive, got {size_bits}")
        direction = self._direction(sender)
        direction.offered += 1
        if self.queued(sender, now) >= self.spec.queue_capacity:
            direction.dropped += 1
            return None
        start = max(now, direction.next_free)
        done = start + serialization_time(size_bits, self.spec.bandwidth_bps)
        direction.next_free = done
        direction.backlog.append(done)
        direction.delivered += 1
        return done + self._delay_ns

    def counters(self, sender: int) -> Tuple[int, int, int]:
        """(offered, delivered, dropped) for one direction."""
        direction = self._direction(sender)
        return direction.offered, direction.delivered, direction.dropped

    @property
    def dropped(self) -> int:
        return sum(d.dropped for d in self._directions.values())


def link_transmit(link: LinkState, direction: int, size_bits: int, now: SimTime) -> Optional[SimTime]:
    """Offer ``size_bits`` to ``link`` in the direction sent by node ``direction``."""
    return link.transmit(direction, size_bits, now)
