import numpy as np
import pytest

from idqf.schemas import DqnHyper, IdqfConfig
from idqf.services.dqn import DqnAgent, Mlp
from idqf.services.engine import NS_PER_S, LinkSpec, LinkState, RngStreams, Simulator, from_ms
from idqf.services.ndn import Data, Face, FibEntry, Forwarder, InRecord, Interest, Name, NextHop, OutRecord, PitEntry
from idqf.services.strategy import IdqfStrategy, br_choose


class RecordingTransport:
    def __init__(self):
        self.sent = []

    def send(self, node, face, packet, now):
        self.sent.append((face.id, packet))

    def schedule_pit_expiry(self, node, entry):
        pass


def fib_with(*faces_and_costs):
    return FibEntry("/p", [NextHop(face, cost) for face, cost in faces_and_costs])


def pending(name=Name("/p", 0), downstream=Face(9)):
    entry = PitEntry(name)
    entry.in_records[downstream.id] = InRecord(downstream, 0)
    return entry


def test_br_new_interest_takes_cheapest_face():
    f1, f2 = Face(1), Face(2)
    assert br_choose(fib_with((f2, 15_000), (f1, 10_000)), pending(), False, 0) is f1


def test_br_retransmission_prefers_unused_face():
    f1, f2 = Face(1), Face(2)
    entry = pending()
    entry.out_records[1] = OutRecord(f1, 0, from_ms(2000), True)
    assert br_choose(fib_with((f1, 10_000), (f2, 15_000)), entry, True, from_ms(500)) is f2


def test_br_retransmission_falls_back_to_most_recent_face():
    f1, f2 = Face(1), Face(2)
    entry = pending()
    entry.out_records[1] = OutRecord(f1, 0, from_ms(2000), True)
    entry.out_records[2] = OutRecord(f2, from_ms(300), from_ms(2300), False)
    assert br_choose(fib_with((f1, 10_000), (f2, 15_000)), entry, True, from_ms(500)) is f2


def test_br_never_sends_back_downstream():
    f1 = Face(1)
    assert br_choose(fib_with((f1, 10_000)), pending(downstream=f1), False, 0) is None


def make_agent_node(features=("retx_ratio", "retx_diff"), reward="rw", retx_mode="agent_way"):
    """Agent router N1: face 1 downstream, faces 2 (rank 0) and 3 (rank 1) upstream."""
    simulator = Simulator()
    node = Forwarder(1, "agent", RecordingTransport(), pit_lifetime=2 * NS_PER_S)
    for face_id, peer in ((1, 0), (2, 2), (3, 3)):
        node.add_face(face_id, peer, LinkState(LinkSpec(1_000, 1_000_000), 1, peer))
    node.install_route("/p", [(2, 10_000), (3, 20_000)])

    config = IdqfConfig(features=list(features), reward=reward, retx_mode=retx_mode)
    hyper = DqnHyper(hidden=4)
    agent = DqnAgent(1, 2 * len(config.features), 2, hyper, RngStreams(0), config.features, reward)
    agent.training = False
    # zero weights: the greedy choice is decided by the output bias alone
    agent.net = Mlp(agent.input_dim, 4, 2)
    experiences = []
    agent.observe = experiences.append

    strategy = IdqfStrategy(agent, config, hyper, simulator)
    node.strategy = strategy
    strategy.start_episode(node, 0)
    return node, strategy, agent, experiences


def prefer(agent, action):
    agent.net.params["b2"] = np.eye(2)[action]


def send(node, seq, t_ms):
    return node.on_interest(node.faces[1], Interest(Name("/p", seq), seq, from_ms(t_ms)), from_ms(t_ms))


def test_chosen_face_carries_the_whole_epoch():
    node, strategy, _, _ = make_agent_node()
    faces = [send(node, seq, seq).face.id for seq in range(80)]
    faces += [send(node, seq, 80 + seq).face.id for seq in range(20)]
    assert set(faces) == {2}
    assert (strategy.stats.n, strategy.stats.r) == (80, 20)
    assert strategy.decisions == 1


def test_one_decision_per_epoch():
    node, strategy, _, experiences = make_agent_node()
    for seq in range(100):
        send(node, seq, 10 * seq)
    assert strategy.decisions == 10
    assert len(experiences) == 9


def test_retransmissions_are_attributed_to_their_original_face():
    node, strategy, agent, experiences = make_agent_node()
    for seq in range(3):
        send(node, seq, 10 * seq)
    prefer(agent, 1)
    assert send(node, 3, 100).face.id == 3
    prefer(agent, 0)
    for seq in range(4):
        assert send(node, seq, 200 + 10 * seq).face.id == 2
    send(node, 4, 240)

    stats = strategy.stats
    assert (stats.r, stats.n) == (4, 1)
    assert stats.r_by_face == {2: 3, 3: 1}

    send(node, 5, 300)
    np.testing.assert_allclose(experiences[2].next_state, [0.75, 3 / 64, 0.25, 0.0])


def test_br_way_retransmissions_off_the_chosen_face_are_not_counted():
    node, strategy, _, _ = make_agent_node(retx_mode="br_way")
    assert send(node, 0, 0).face.id == 2
    assert send(node, 0, 50).face.id == 3
    stats = strategy.stats
    assert stats.r == 0
    assert stats.r_by_face == {}
    assert (stats.n, stats.forwarded) == (1, {2: 1, 3: 1})


def test_agent_never_forwards_back_to_the_requesting_face():
    node, strategy, agent, _ = make_agent_node()
    prefer(agent, 1)
    assert send(node, 0, 100).face.id == 3
    interest = Interest(Name("/p", 1), 1, from_ms(110))
    result = node.on_interest(node.faces[3], interest, from_ms(110))
    assert result.face.id == 2
    assert strategy.stats.n == 1


def test_data_on_chosen_face_is_an_rtt_sample():
    node, strategy, _, _ = make_agent_node()
    send(node, 0, 0)
    node.on_data(node.faces[2], Data(Name("/p", 0)), from_ms(61))
    assert strategy.stats.rtt_samples == [pytest.approx(0.061)]
    assert strategy.stats.satisfied == {2: 1}


def test_data_on_other_face_leaves_samples_unchanged():
    node, strategy, _, _ = make_agent_node()
    record = OutRecord(node.faces[3], from_ms(10), from_ms(2010), True)
    strategy.record_data_feedback(Data(Name("/p", 7)), record, from_ms(80))
    assert strategy.stats.m == 0


def test_idle_epoch_under_rw1_gets_the_idle_reward():
    node, strategy, _, experiences = make_agent_node(reward="rw1")
    strategy.finish_episode(node, from_ms(100))
    assert strategy.cumulative_reward == -10000.0
    assert experiences[-1].terminal
    assert strategy.stats is None


def test_guard_timer_closes_idle_epochs():
    node, strategy, _, experiences = make_agent_node()
    strategy.simulator.run_until(from_ms(450))
    assert len(experiences) == 2
    assert strategy.decisions == 3
