"""
IDQF Forwarding Simulator - Network Assembly
Wires routers, links, faces, applications and strategies for one episode.
"""

from typing import Dict, List, Mapping, Optional
import logging

from idqf.schemas import ScenarioConfig
from idqf.services.apps import ConsumerApp, ProducerApp
from idqf.services.dqn import DqnAgent
from idqf.services.engine import EventKind, LinkState, RngStreams, SimTime, Simulator, from_seconds
from idqf.services.ndn import Data, Face, Forwarder, Interest, Packet, PitEntry
from idqf.services.strategy import BestRouteStrategy, ForwardingStrategy, IdqfStrategy
from idqf.services.topology import TopologySpec, compute_fib, face_table


logger = logging.getLogger(__name__)


class Network:
    """
    One episode's worth of simulated network.

    Queues, PITs and content stores start empty; the agents passed in carry
    their parameters, replay buffers and exploration schedule across episodes.
    """

    def __init__(
        self,
        spec: TopologySpec,
        config: ScenarioConfig,
        agents: Optional[Mapping[int, DqnAgent]] = None,
        episode: int = 0,
        seed: Optional[int] = None,
        record_trace: bool = False,
    ):
        self.spec = spec
        self.config = config
        self.episode = episode
        self.streams = RngStreams(config.seed if seed is None else seed)
        self.simulator = Simulator(record_trace=record_trace)
        self.duration: SimTime = from_seconds(config.duration_s)
        self.agents: Dict[int, DqnAgent] = dict(agents or {})

        self.faces = face_table(spec)
        self.nodes: Dict[int, Forwarder] = {
            node.id: Forwarder(
                node.id,
                node.label,
                transport=self,
                pit_lifetime=from_seconds(config.pit_lifetime_s),
                cs_capacity=config.cs_capacity,
            )
            for node in spec.nodes
        }
        self.links: List[LinkState] = []
        for link in spec.links:
            state = LinkState(link.link_spec(), link.a, link.b)
            self.links.append(state)
            self.nodes[link.a].add_face(self.faces[link.a][link.b], link.b, state)
            self.nodes[link.b].add_face(self.faces[link.b][link.a], link.a, state)

        agent_nodes = set(self.agents) if config.uses_agents else set()
        fib = compute_fib(spec, agent_nodes, config.idqf.top_k_faces)
        for node_id, routes_by_prefix in fib.items():
            for prefix, routes in routes_by_prefix.items():
                self.nodes[node_id].install_route(prefix, [(route.face_id, route.cost_us) for route in routes])

        self.strategies: Dict[int, ForwardingStrategy] = {}
        for node_id, node in self.nodes.items():
            if node_id in agent_nodes:
                strategy: ForwardingStrategy = IdqfStrategy(
                    self.agents[node_id], config.idqf, config.dqn, self.simulator
                )
            else:
                strategy = BestRouteStrategy()
            node.strategy = strategy
            self.strategies[node_id] = strategy

        self.producers: Dict[int, ProducerApp] = {
            app.node: ProducerApp(self.nodes[app.node], app.prefix, config.data_payload_bits)
            for app in spec.producers
        }
        self.consumers: Dict[int, ConsumerApp] = {
            app.node: ConsumerApp(
                self.nodes[app.node],
                self.simulator,
                app.prefix,
                config.interest_rate,
                self.streams.stream(app.node, "traffic", episode),
                from_seconds(config.retx_timeout_s),
                self.duration,
                config.interest_size_bits,
            )
            for app in spec.consumers
        }

    # Transport
    def send(self, node: Forwarder, face: Face, packet: Packet, now: SimTime) -> None:
        if face.is_app:
            self.simulator.call_at(now, EventKind.PACKET_ARRIVAL, self._deliver_local, node, packet)
            return
        arrival = face.link.transmit(node.node_id, packet.size_bits, now)
        if arrival is None:
            logger.debug(f"N{node.node_id}: queue to N{face.peer} full, dropped {packet.name}")
            return
        peer = self.nodes[face.peer]
        in_face = peer.faces[self.faces[face.peer][node.node_id]]
        self.simulator.call_at(arrival, EventKind.PACKET_ARRIVAL, self._arrive, peer, in_face, packet)

    def schedule_pit_expiry(self, node: Forwarder, entry: PitEntry) -> None:
        self.simulator.call_at(entry.entry_expires_at, EventKind.PIT_EXPIRY, self._expire, node, entry.name)

    def _expire(self, node: Forwarder, name) -> None:
        node.expire_entry(name, self.simulator.now)

    def _arrive(self, node: Forwarder, in_face: Face, packet: Packet) -> None:
        now = self.simulator.now
        if isinstance(packet, Interest):
            node.on_interest(in_face, packet, now)
        else:
            node.on_data(in_face, packet, now)

    def _deliver_local(self, node: Forwarder, packet: Packet) -> None:
        now = self.simulator.now
        if isinstance(packet, Interest):
            producer = self.producers.get(node.node_id)
            if producer is not None:
                producer.on_interest(packet, now)
        elif isinstance(packet, Data):
            consumer = self.consumers.get(node.node_id)
            if consumer is not None:
                consumer.deliver(packet, now)

    # Episode
    def run(self) -> "Network":
        """Simulate the whole episode and close every agent's last epoch."""
        for node_id, strategy in self.strategies.items():
            strategy.start_episode(self.nodes[node_id], 0)
        for consumer in self.consumers.values():
            consumer.start()
        processed = self.simulator.run_until(self.duration)
        for node_id, strategy in self.strategies.items():
            strategy.finish_episode(self.nodes[node_id], self.duration)
        logger.debug(f"Episode {self.episode}: {processed} events processed")
        return self

    @property
    def link_drops(self) -> int:
        return sum(link.dropped for link in self.links)

    def agent_strategies(self) -> Dict[int, IdqfStrategy]:
        return {
            node_id: strategy
            for node_id, strategy in self.strategies.items()
            if isinstance(strategy, IdqfStrategy)
        }
