"""
IDQF Forwarding Simulator - NDN Forwarding Plane
Content Store, Pending Interest Table, FIB, faces and the Interest/Data
processing pipeline of a router.
"""

from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, Iterable, List, NamedTuple, Optional, Protocol, Union
import logging

from idqf.services.engine import LinkState, SimTime

if TYPE_CHECKING:
    from idqf.services.strategy import ForwardingStrategy


logger = logging.getLogger(__name__)

# Face id reserved for the applications (consumer/producer) hosted on a node
APP_FACE_ID = 0

DEFAULT_INTEREST_BITS = 320
DEFAULT_DATA_BITS = 8200


class Name(NamedTuple):
    """Content name: a producer prefix plus a sequence number."""
    prefix: str
    seq: int

    def __str__(self) -> str:
        return f"{self.prefix}/{self.seq}"


@dataclass(slots=True)
class Interest:
    name: Name
    nonce: int
    issued_at: SimTime
    size_bits: int = DEFAULT_INTEREST_BITS


@dataclass(slots=True)
class Data:
    name: Name
    payload_bits: int = DEFAULT_DATA_BITS

    def __post_init__(self):
        if self.payload_bits <= 0:
            raise ValueError(f"data payload must be positive, got {self.payload_bits}")

    @property
    def size_bits(self) -> int:
        return self.payload_bits


Packet = Union[Interest, Data]


@dataclass(slots=True, eq=False)
class Face:
    """A node-local interface; face 0 is the application face."""
    id: int
    peer: Optional[int] = None
    link: Optional[LinkState] = None

    @property
    def is_app(self) -> bool:
        return self.id == APP_FACE_ID


@dataclass(slots=True)
class InRecord:
    face: Face
    arrival: SimTime


@dataclass(slots=True)
class OutRecord:
    face: Face
    sent_at: SimTime
    expires_at: SimTime
    was_new: bool


@dataclass(slots=True)
class PitEntry:
    """Pending interest: one in-record and one out-record per face at most."""
    name: Name
    in_records: Dict[int, InRecord] = field(default_factory=dict)
    out_records: Dict[int, OutRecord] = field(default_factory=dict)
    entry_expires_at: SimTime = 0

    def live_out_records(self, now: SimTime) -> List[OutRecord]:
        return [record for record in self.out_records.values() if record.expires_at > now]


class NextHop(NamedTuple):
    face: Face
    cost_us: int


@dataclass
class FibEntry:
    """Ranked next hops for a prefix, ascending cost then face id."""
    prefix: str
    next_hops: List[NextHop] = field(default_factory=list)

    def __post_init__(self):
        self.next_hops.sort(key=lambda hop: (hop.cost_us, hop.face.id))

    def truncated(self, k: int) -> "FibEntry":
        return FibEntry(self.prefix, list(self.next_hops[:k]))


class ContentStore:
    """LRU packet cache; capacity 0 disables caching."""

    def __init__(self, capacity: int = 0):
        if capacity < 0:
            raise ValueError("content store capacity must be non-negative")
        self.capacity = capacity
        self._entries: "OrderedDict[Name, Data]" = OrderedDict()

    def __len__(self) -> int:
        return len(self._entries)

    def lookup(self, name: Name) -> Optional[Data]:
        data = self._entries.get(name)
        if data is not None:
            self._entries.move_to_end(name)
        return data

    def insert(self, data: Data) -> None:
        if self.capacity == 0:
            return
        self._entries[data.name] = data
        self._entries.move_to_end(data.name)
        while len(self._entries) > self.capacity:
            self._entries.popitem(last=False)


class InterestOutcome(str, Enum):
    FORWARDED = "forwarded"
    AGGREGATED = "aggregated"
    SATISFIED_FROM_CACHE = "satisfied-from-cache"
    DROPPED = "dropped"


@dataclass(slots=True)
class InterestResult:
    outcome: InterestOutcome
    face: Optional[Face] = None


class DataOutcome(str, Enum):
    SATISFIED_DOWNSTREAM = "satisfied-downstream"
    UNSOLICITED = "unsolicited"


@dataclass(slots=True)
class DataResult:
    outcome: DataOutcome
    count: int = 0


@dataclass
class NodeCounters:
    """Per-node packet accounting."""
    interests_in: int = 0
    forwarded: int = 0
    aggregated: int = 0
    cache_hits: int = 0
    dropped: int = 0
    no_route: int = 0
    router_retransmissions: int = 0
    data_in: int = 0
    data_downstream: int = 0
    unsolicited: int = 0
    pit_expired: int = 0
    # face id -> interests forwarded through it
    per_face: Dict[int, int] = field(default_factory=dict)


class Transport(Protocol):
    """What a forwarder needs from the network around it."""

    def send(self, node: "Forwarder", face: Face, packet: Packet, now: SimTime) -> None: ...

    def schedule_pit_expiry(self, node: "Forwarder", entry: PitEntry) -> None: ...


def is_retransmission(entry: Optional[PitEntry], now: SimTime) -> bool:
    """
    Router-side retransmission test.

    An interest is retransmitted when its PIT entry still holds an unexpired
    out-record; without a PIT entry it counts as new.
    """
    if entry is None:
        return False
    return any(record.expires_at > now for record in entry.out_records.values())


class Forwarder:
    """An NDN router: CS, PIT, FIB, faces and one forwarding strategy."""

    def __init__(
        self,
        node_id: int,
        label: str,
        transport: Transport,
        pit_lifetime: SimTime,
        interest_lifetime: Optional[SimTime] = None,
        cs_capacity: int = 0,
    ):
        self.node_id = node_id
        self.label = label
        self.transport = transport
        self.pit_lifetime = pit_lifetime
        self.interest_lifetime = interest_lifetime if interest_lifetime is not None else pit_lifetime
        self.cs = ContentStore(cs_capacity)
        self.pit: Dict[Name, PitEntry] = {}
        self.fib: Dict[str, FibEntry] = {}
        self.faces: Dict[int, Face] = {APP_FACE_ID: Face(APP_FACE_ID)}
        self.strategy: Optional["ForwardingStrategy"] = None
        self.counters = NodeCounters()

    def __repr__(self) -> str:
        return f"<Forwarder(N{self.node_id}, '{self.label}')>"

    @property
    def app_face(self) -> Face:
        return self.faces[APP_FACE_ID]

    def add_face(self, face_id: int, peer: int, link: LinkState) -> Face:
        if face_id in self.faces:
            raise ValueError(f"face {face_id} already exists on N{self.node_id}")
        face = Face(face_id, peer, link)
        self.faces[face_id] = face
        return face

    def install_route(self, prefix: str, hops: Iterable[tuple]) -> FibEntry:
        """Install ``(face_id, cost_us)`` pairs as the FIB entry for ``prefix``."""
        entry = FibEntry(prefix, [NextHop(self.faces[face_id], cost) for face_id, cost in hops])
        self.fib[prefix] = entry
        return entry

    def on_interest(self, in_face: Face, interest: Interest, now: SimTime) -> InterestResult:
        """
        Run the Interest pipeline: CS lookup, PIT aggregation, then the strategy.

        Returns:
            InterestResult describing what happened to the packet
        """
        counters = self.counters
        counters.interests_in += 1
        name = interest.name

        if self.cs.capacity:
            cached = self.cs.lookup(name)
            if cached is not None:
                counters.cache_hits += 1
                self.transport.send(self, in_face, cached, now)
                return InterestResult(InterestOutcome.SATISFIED_FROM_CACHE, in_face)

        entry = self.pit.get(name)
        if entry is not None and any(face_id != in_face.id for face_id in entry.in_records):
            entry.in_records[in_face.id] = InRecord(in_face, now)
            entry.entry_expires_at = now + self.pit_lifetime
            self.transport.schedule_pit_expiry(self, entry)
            counters.aggregated += 1
            return InterestResult(InterestOutcome.AGGREGATED)

        fib_entry = self.fib.get(name.prefix)
        if fib_entry is None or not fib_entry.next_hops:
            counters.dropped += 1
            counters.no_route += 1
            logger.debug(f"N{self.node_id}: no route for {name}")
            return InterestResult(InterestOutcome.DROPPED)

        is_retx = is_retransmission(entry, now)
        if is_retx:
            counters.router_retransmissions += 1
        if entry is None:
            entry = PitEntry(name)
            self.pit[name] = entry
        entry.in_records[in_face.id] = InRecord(in_face, now)
        entry.entry_expires_at = now + self.pit_lifetime

        face = self.strategy.choose_face(self, fib_entry, entry, interest, is_retx, now)
        if face is None:
            if entry.out_records:
                self.transport.schedule_pit_expiry(self, entry)
            else:
                del self.pit[name]
            counters.dropped += 1
            return InterestResult(InterestOutcome.DROPPED)

        expires_at = now + self.interest_lifetime
        record = entry.out_records.get(face.id)
        if record is None:
            entry.out_records[face.id] = OutRecord(face, now, expires_at, not is_retx)
        else:
            record.sent_at = now
            record.expires_at = expires_at
            record.was_new = record.was_new and not is_retx
        self.transport.schedule_pit_expiry(self, entry)
        counters.forwarded += 1
        counters.per_face[face.id] = counters.per_face.get(face.id, 0) + 1
        self.transport.send(self, face, interest, now)
        return InterestResult(InterestOutcome.FORWARDED, face)

    def on_data(self, in_face: Face, data: Data, now: SimTime) -> DataResult:
        """Satisfy the matching PIT entry, or count the Data as unsolicited."""
        counters = self.counters
        counters.data_in += 1
        entry = self.pit.pop(data.name, None)
        if entry is None:
            counters.unsolicited += 1
            return DataResult(DataOutcome.UNSOLICITED)

        self.strategy.after_receive_data(self, in_face, data, entry.out_records.get(in_face.id), now)
        self.cs.insert(data)

        sent = 0
        for record in entry.in_records.values():
            if record.face.id == in_face.id and not in_face.is_app:
                continue
            self.transport.send(self, record.face, data, now)
            sent += 1
        counters.data_downstream += sent
        return DataResult(DataOutcome.SATISFIED_DOWNSTREAM, sent)

    def expire_entry(self, name: Name, now: SimTime) -> bool:
        """Timer callback: drop ``name``'s entry if its lifetime has passed."""
        entry = self.pit.get(name)
        if entry is None or entry.entry_expires_at > now:
            return False
        del self.pit[name]
        self.counters.pit_expired += 1
        self.strategy.on_entry_expired(self, entry, now)
        return True

    def expire_pit(self, now: SimTime) -> int:
        """Remove every entry whose lifetime has passed."""
        expired = [name for name, entry in self.pit.items() if entry.entry_expires_at <= now]
        for name in expired:
            self.expire_entry(name, now)
        return len(expired)
