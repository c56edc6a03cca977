"""
IDQF Forwarding Simulator - Topology Service
Topology files, built-in generators and shortest-delay FIB population.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Collection, Dict, List, NamedTuple, Optional, Tuple
import logging
import re

import networkx as nx

from idqf.config import get_settings
from idqf.errors import TopologyError
from idqf.services.engine import NS_PER_S, LinkSpec, SimTime, from_us
from idqf.services.ndn import APP_FACE_ID


logger = logging.getLogger(__name__)

DEFAULT_PREFIX = "/prod0"
DEFAULT_QUEUE = 100


@dataclass(frozen=True)
class NodeDef:
    id: int
    label: str


@dataclass(frozen=True)
class LinkDef:
    a: int
    b: int
    delay_us: int
    bw_bps: int
    queue: int = DEFAULT_QUEUE

    def link_spec(self) -> LinkSpec:
        return LinkSpec(self.delay_us, self.bw_bps, self.queue)


@dataclass(frozen=True)
class AppDef:
    node: int
    prefix: str


@dataclass
class TopologySpec:
    """Routers, links and the applications attached to them."""
    nodes: List[NodeDef] = field(default_factory=list)
    links: List[LinkDef] = field(default_factory=list)
    consumers: List[AppDef] = field(default_factory=list)
    producers: List[AppDef] = field(default_factory=list)

    @property
    def node_ids(self) -> List[int]:
        return [node.id for node in self.nodes]

    def label_of(self, node_id: int) -> str:
        for node in self.nodes:
            if node.id == node_id:
                return node.label
        raise KeyError(node_id)

    def graph(self) -> nx.Graph:
        """Undirected graph with ``delay_us`` and ``capacity`` edge attributes."""
        graph = nx.Graph()
        graph.add_nodes_from(self.node_ids)
        for link in self.links:
            graph.add_edge(link.a, link.b, delay_us=link.delay_us, capacity=link.bw_bps)
        return graph

    def is_connected(self) -> bool:
        return len(self.nodes) > 0 and nx.is_connected(self.graph())


class Route(NamedTuple):
    """One ranked next hop as computed from the topology."""
    face_id: int
    peer: Optional[int]
    cost_us: int


_LINK_KEYS = {"delay_us", "bw_bps", "queue"}
_PREFIX_RE = re.compile(r"^(/[A-Za-z0-9._-]+)+$")


def _parse_int(token: str, what: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise TopologyError(f"{what} must be an integer, got '{token}'", line) from None


def parse_topology(text: str) -> TopologySpec:
    """
    Parse the line-oriented topology format.

    Args:
        text: Topology document (``node``, ``link``, ``producer``, ``consumer``
            lines; ``#`` starts a comment; sections may appear in any order)

    Returns:
        Validated TopologySpec

    Raises:
        TopologyError: with the offending line number
    """
    spec = TopologySpec()
    node_lines: Dict[int, int] = {}
    pending_links: List[Tuple[LinkDef, int]] = []
    pending_apps: List[Tuple[str, AppDef, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        keyword = tokens[0]

        if keyword == "node":
            if len(tokens) != 3:
                raise TopologyError("expected 'node <id> <label>'", lineno)
            node_id = _parse_int(tokens[1], "node id", lineno)
            if node_id < 0:
                raise TopologyError(f"node id must be non-negative, got {node_id}", lineno)
            if node_id in node_lines:
                raise TopologyError(f"duplicate node id {node_id} (first declared on line {node_lines[node_id]})", lineno)
            node_lines[node_id] = lineno
            spec.nodes.append(NodeDef(node_id, tokens[2]))

        elif keyword == "link":
            if len(tokens) < 4:
                raise TopologyError("expected 'link <a> <b> delay_us=<int> bw_bps=<int> [queue=<int>]'", lineno)
            a = _parse_int(tokens[1], "link endpoint", lineno)
            b = _parse_int(tokens[2], "link endpoint", lineno)
            params: Dict[str, int] = {}
            for token in tokens[3:]:
                key, sep, value = token.partition("=")
                if not sep or key not in _LINK_KEYS:
                    raise TopologyError(f"unknown link attribute '{token}'", lineno)
                if key in params:
                    raise TopologyError(f"link attribute '{key}' given twice", lineno)
                params[key] = _parse_int(value, key, lineno)
            for key in ("delay_us", "bw_bps"):
                if key not in params:
                    raise TopologyError(f"link is missing {key}", lineno)
                if params[key] <= 0:
                    raise TopologyError(f"{key} must be positive, got {params[key]}", lineno)
            queue = params.get("queue", DEFAULT_QUEUE)
            if queue < 1:
                raise TopologyError(f"queue must be at least 1, got {queue}", lineno)
            pending_links.append((LinkDef(a, b, params["delay_us"], params["bw_bps"], queue), lineno))

        elif keyword in ("producer", "consumer"):
            if len(tokens) != 3:
                raise TopologyError(f"expected '{keyword} <node> <prefix>'", lineno)
            node_id = _parse_int(tokens[1], f"{keyword} node", lineno)
            prefix = tokens[2]
            if not _PREFIX_RE.match(prefix):
                raise TopologyError(f"invalid name prefix '{prefix}'", lineno)
            pending_apps.append((keyword, AppDef(node_id, prefix), lineno))

        else:
            raise TopologyError(f"unknown keyword '{keyword}'", lineno)

    seen_pairs: Dict[frozenset, int] = {}
    for link, lineno in pending_links:
        for endpoint in (link.a, link.b):
            if endpoint not in node_lines:
                raise TopologyError(f"link references unknown node {endpoint}", lineno)
        if link.a == link.b:
            raise TopologyError(f"self-loop on node {link.a}", lineno)
        pair = frozenset((link.a, link.b))
        if pair in seen_pairs:
            raise TopologyError(f"second link between {link.a} and {link.b} (first on line {seen_pairs[pair]})", lineno)
        seen_pairs[pair] = lineno
        spec.links.append(link)

    producer_prefixes: Dict[str, int] = {}
    for keyword, app, lineno in pending_apps:
        if app.node not in node_lines:
            raise TopologyError(f"{keyword} references unknown node {app.node}", lineno)
        if keyword == "producer":
            if app.prefix in producer_prefixes:
                raise TopologyError(f"prefix {app.prefix} already produced (line {producer_prefixes[app.prefix]})", lineno)
            producer_prefixes[app.prefix] = lineno
            spec.producers.append(app)
        else:
            spec.consumers.append(app)

    logger.debug(f"Parsed topology: {len(spec.nodes)} nodes, {len(spec.links)} links")
    return spec


def serialize_topology(spec: TopologySpec) -> str:
    """Render ``spec`` in the format read by :func:`parse_topology`."""
    lines = [f"node {node.id} {node.label}" for node in spec.nodes]
    lines += [
        f"link {link.a} {link.b} delay_us={link.delay_us} bw_bps={link.bw_bps} queue={link.queue}"
        for link in spec.links
    ]
    lines += [f"producer {app.node} {app.prefix}" for app in spec.producers]
    lines += [f"consumer {app.node} {app.prefix}" for app in spec.consumers]
    return "\n".join(lines) + "\n"


def face_table(spec: TopologySpec) -> Dict[int, Dict[int, int]]:
    """Face id of every neighbor, numbered from 1 in link declaration order."""
    faces: Dict[int, Dict[int, int]] = {node_id: {} for node_id in spec.node_ids}
    for link in spec.links:
        faces[link.a][link.b] = len(faces[link.a]) + 1
        faces[link.b][link.a] = len(faces[link.b]) + 1
    return faces


def compute_fib(
    spec: TopologySpec,
    agent_nodes: Collection[int] = (),
    top_k: int = 2,
) -> Dict[int, Dict[str, List[Route]]]:
    """
    Rank every neighbor face of every node by shortest propagation delay.

    A face's cost is the neighbor's shortest distance to the producer plus the
    delay of the link to it. Agent nodes keep only the ``top_k`` best faces.

    Raises:
        TopologyError: if a producer cannot be reached from every node
    """
    graph = spec.graph()
    faces = face_table(spec)
    fib: Dict[int, Dict[str, List[Route]]] = {node_id: {} for node_id in spec.node_ids}

    for producer in spec.producers:
        distance = nx.single_source_dijkstra_path_length(graph, producer.node, weight="delay_us")
        unreachable = sorted(set(spec.node_ids) - set(distance))
        if unreachable:
            raise TopologyError(
                f"producer {producer.prefix} on N{producer.node} is unreachable from nodes {unreachable}"
            )
        for node_id in spec.node_ids:
            if node_id == producer.node:
                fib[node_id][producer.prefix] = [Route(APP_FACE_ID, None, 0)]
                continue
            routes = sorted(
                (
                    Route(faces[node_id][neighbor], neighbor, distance[neighbor] + graph[node_id][neighbor]["delay_us"])
                    for neighbor in graph.neighbors(node_id)
                ),
                key=lambda route: (route.cost_us, route.face_id),
            )
            if node_id in agent_nodes:
                routes = routes[:top_k]
            fib[node_id][producer.prefix] = routes

    return fib


def best_path(fib: Dict[int, Dict[str, List[Route]]], start: int, prefix: str) -> List[int]:
    """Node sequence obtained by following rank-0 faces from ``start``."""
    path = [start]
    while True:
        routes = fib[path[-1]].get(prefix)
        if not routes:
            raise TopologyError(f"no route for {prefix} at N{path[-1]}")
        head = routes[0]
        if head.face_id == APP_FACE_ID:
            return path
        if head.peer in path:
            raise TopologyError(f"rank-0 faces loop at N{head.peer} for {prefix}")
        path.append(head.peer)


class RttOracle(NamedTuple):
    path: List[int]
    propagation: SimTime
    total: SimTime


def analytic_rtt(spec: TopologySpec, path: List[int], interest_bits: int, data_bits: int) -> RttOracle:
    """
    Uncongested round-trip time along ``path``.

    ``propagation`` counts link delays both ways; ``total`` adds the
    serialization of one interest upstream and one data packet downstream.
    """
    links = {frozenset((link.a, link.b)): link for link in spec.links}
    propagation = 0
    serialization = 0
    for a, b in zip(path, path[1:]):
        link = links[frozenset((a, b))]
        propagation += 2 * from_us(link.delay_us)
        serialization += -(-interest_bits * NS_PER_S // link.bw_bps)
        serialization += -(-data_bits * NS_PER_S // link.bw_bps)
    return RttOracle(list(path), propagation, propagation + serialization)


def bottleneck_capacity(spec: TopologySpec, source: int, target: int) -> int:
    """Min-cut capacity (bits/s) between two nodes."""
    if source == target:
        raise ValueError("source and target must differ")
    return int(nx.maximum_flow_value(spec.graph().to_directed(), source, target, capacity="capacity"))


def build_grid(
    rows: int,
    cols: int,
    delay_us: int = 10_000,
    bw_bps: int = 1_000_000,
    queue: int = DEFAULT_QUEUE,
) -> TopologySpec:
    """rows x cols lattice; consumer on the first corner, producer on the opposite one."""
    if rows < 1 or cols < 1:
        raise TopologyError(f"grid dimensions must be at least 1, got {rows}x{cols}")
    spec = TopologySpec()
    for r in range(rows):
        for c in range(cols):
            spec.nodes.append(NodeDef(r * cols + c, f"g{r}_{c}"))
    for r in range(rows):
        for c in range(cols):
            node_id = r * cols + c
            if c + 1 < cols:
                spec.links.append(LinkDef(node_id, node_id + 1, delay_us, bw_bps, queue))
            if r + 1 < rows:
                spec.links.append(LinkDef(node_id, node_id + cols, delay_us, bw_bps, queue))
    if len(spec.nodes) > 1:
        spec.producers.append(AppDef(len(spec.nodes) - 1, DEFAULT_PREFIX))
        spec.consumers.append(AppDef(0, DEFAULT_PREFIX))
    return spec


def build_tree(
    depth: int,
    fanout: int,
    delay_us: int = 10_000,
    bw_bps: int = 1_000_000,
    queue: int = DEFAULT_QUEUE,
) -> TopologySpec:
    """Complete tree; producer at the root, consumer on the last leaf."""
    if depth < 1 or fanout < 1:
        raise TopologyError(f"tree dimensions must be at least 1, got depth={depth} fanout={fanout}")
    count = sum(fanout ** level for level in range(depth + 1))
    spec = TopologySpec(nodes=[NodeDef(i, f"t{i}") for i in range(count)])
    for child in range(1, count):
        spec.links.append(LinkDef((child - 1) // fanout, child, delay_us, bw_bps, queue))
    spec.producers.append(AppDef(0, DEFAULT_PREFIX))
    spec.consumers.append(AppDef(count - 1, DEFAULT_PREFIX))
    return spec


_GENERATOR_RE = re.compile(r"^(grid|tree):(\d+)x(\d+)$")


def load_topology(ref: str) -> TopologySpec:
    """
    Resolve a topology reference.

    Args:
        ref: ``sprint`` (shipped file), ``grid:RxC``, ``tree:DxF`` or a file path
    """
    if ref == "sprint":
        path = get_settings().sprint_topology_path
        return parse_topology(path.read_text(encoding="utf-8"))
    match = _GENERATOR_RE.match(ref)
    if match:
        kind, first, second = match.group(1), int(match.group(2)), int(match.group(3))
        return build_grid(first, second) if kind == "grid" else build_tree(first, second)
    path = Path(ref)
    if not path.is_file():
        raise TopologyError(f"topology file not found: {path}")
    return parse_topology(path.read_text(encoding="utf-8"))
