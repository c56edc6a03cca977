import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from idqf.errors import ConfigError, TopologyError
from idqf.schemas import ScenarioConfig
from idqf.services.engine import to_ms
from idqf.services.experiment import validate_scenario
from idqf.services.ndn import APP_FACE_ID
from idqf.services.topology import (
    AppDef,
    LinkDef,
    NodeDef,
    TopologySpec,
    analytic_rtt,
    best_path,
    bottleneck_capacity,
    build_grid,
    build_tree,
    compute_fib,
    face_table,
    load_topology,
    parse_topology,
    serialize_topology,
)

from conftest import line_topology


TWO_NODES = """
node 0 a
node 1 b
link 0 1 delay_us=1000 bw_bps=1000000
producer 1 /p
consumer 0 /p
"""


def test_two_node_file():
    spec = parse_topology(TWO_NODES)
    assert len(spec.nodes) == 2
    assert len(spec.links) == 1
    assert spec.links[0].queue == 100


def test_shipped_sprint_topology():
    spec = load_topology("sprint")
    assert len(spec.nodes) == 11
    assert len(spec.links) == 18
    assert spec.label_of(0) == "Boulder"
    assert [app.node for app in spec.consumers] == [0]
    assert [app.node for app in spec.producers] == [1]
    assert spec.is_connected()


def test_unknown_link_endpoint_reports_its_line():
    text = "node 0 a\nnode 1 b\n\nlink 0 7 delay_us=1000 bw_bps=1000000\n"
    with pytest.raises(TopologyError) as excinfo:
        parse_topology(text)
    assert excinfo.value.line == 4
    assert "line 4" in str(excinfo.value)


@pytest.mark.parametrize(
    "text, line",
    [
        ("node 0 a\nnode 0 b\n", 2),
        ("node 0 a\nlink 0 0 delay_us=1 bw_bps=1\n", 2),
        ("node 0 a\nnode 1 b\nlink 0 1 delay_us=1 bw_bps=1 color=red\n", 3),
        ("node 0 a\nnode 1 b\nlink 0 1 delay_us=1 bw_bps=1 queue=0\n", 3),
        ("node 0 a\nnode 1 b\nlink 0 1 delay_us=0 bw_bps=1\n", 3),
        ("node 0 a\nnode 1 b\nlink 0 1 delay_us=1 bw_bps=1\nlink 1 0 delay_us=1 bw_bps=1\n", 4),
        ("node 0 a\nproducer 0 no-slash\n", 2),
        ("node 0 a\nrouter 1\n", 2),
        ("node 0 a\nnode 1 b\nproducer 0 /p\nproducer 1 /p\n", 4),
        ("node x a\n", 1),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(TopologyError) as excinfo:
        parse_topology(text)
    assert excinfo.value.line == line


def test_topology_error_is_a_config_error():
    with pytest.raises(ConfigError):
        parse_topology("bogus\n")


def test_far_node_routes_through_middle():
    spec = line_topology(3)
    spec.links[0] = LinkDef(0, 1, 10_000, 1_000_000)
    spec.links[1] = LinkDef(1, 2, 20_000, 1_000_000)
    fib = compute_fib(spec)
    head = fib[0]["/prod0"][0]
    assert head.peer == 1
    assert head.cost_us == 30_000
    assert fib[2]["/prod0"] == [(APP_FACE_ID, None, 0)]


def test_face_ids_follow_link_declaration_order():
    spec = load_topology("sprint")
    faces = face_table(spec)
    assert faces[3] == {0: 1, 6: 2, 9: 3}


def _brute_force_ranking(graph: nx.Graph, node: int, target: int):
    best = {}
    for path in nx.all_simple_paths(graph, node, target):
        cost = sum(graph[a][b]["delay_us"] for a, b in zip(path, path[1:]))
        best[path[1]] = min(cost, best.get(path[1], cost))
    return sorted(best.items(), key=lambda item: item[1])


@pytest.mark.parametrize("agent", [3, 4, 6, 9])
def test_sprint_agent_faces_match_exhaustive_search(agent):
    spec = load_topology("sprint")
    fib = compute_fib(spec, agent_nodes=[3, 4, 6, 9], top_k=2)
    routes = fib[agent]["/prod0"]
    expected = _brute_force_ranking(spec.graph(), agent, 1)[:2]
    assert [(route.peer, route.cost_us) for route in routes] == expected


@st.composite
def connected_topologies(draw):
    n = draw(st.integers(min_value=2, max_value=8))
    pairs = [(draw(st.integers(min_value=0, max_value=child - 1)), child) for child in range(1, n)]
    tree = set(pairs)
    pairs += [(a, b) for a in range(n) for b in range(a + 1, n) if (a, b) not in tree and draw(st.booleans())]
    pairs = draw(st.permutations(pairs))
    links = [LinkDef(a, b, draw(st.integers(min_value=1, max_value=50)), 1_000_000) for a, b in pairs]
    producer = draw(st.integers(min_value=0, max_value=n - 1))
    return TopologySpec(
        nodes=[NodeDef(i, f"n{i}") for i in range(n)],
        links=links,
        producers=[AppDef(producer, "/p")],
    )


def _cheapest_walk(graph: nx.Graph, start: int, target: int) -> int:
    if start == target:
        return 0
    return min(
        sum(graph[a][b]["delay_us"] for a, b in zip(path, path[1:]))
        for path in nx.all_simple_paths(graph, start, target)
    )


@settings(deadline=None)
@given(connected_topologies())
def test_fib_matches_exhaustive_search_on_random_graphs(spec):
    graph = spec.graph()
    faces = face_table(spec)
    target = spec.producers[0].node
    fib = compute_fib(spec)

    for node in spec.node_ids:
        routes = fib[node]["/p"]
        if node == target:
            assert routes == [(APP_FACE_ID, None, 0)]
            continue
        expected = sorted(
            (
                (faces[node][peer], peer, graph[node][peer]["delay_us"] + _cheapest_walk(graph, peer, target))
                for peer in graph.neighbors(node)
            ),
            key=lambda route: (route[2], route[0]),
        )
        assert [tuple(route) for route in routes] == expected
        assert routes[0].cost_us == _cheapest_walk(graph, node, target)


def test_sprint_cheyenne_prefers_stockton_then_kansas_city():
    fib = compute_fib(load_topology("sprint"), agent_nodes=[3])
    assert [route.peer for route in fib[3]["/prod0"]] == [6, 9]
    assert [route.cost_us for route in fib[3]["/prod0"]] == [24_755, 28_000]


def test_equal_cost_neighbors_rank_lower_face_first():
    text = """
node 0 c
node 1 left
node 2 right
node 3 p
link 0 2 delay_us=1000 bw_bps=1000000
link 0 1 delay_us=1000 bw_bps=1000000
link 1 3 delay_us=1000 bw_bps=1000000
link 2 3 delay_us=1000 bw_bps=1000000
producer 3 /p
consumer 0 /p
"""
    routes = compute_fib(parse_topology(text))[0]["/p"]
    assert [(route.face_id, route.peer) for route in routes] == [(1, 2), (2, 1)]


def test_unreachable_producer_is_reported():
    spec = parse_topology("node 0 a\nnode 1 b\nnode 2 c\nlink 0 1 delay_us=1 bw_bps=1\nproducer 2 /p\n")
    with pytest.raises(TopologyError, match=r"\[0, 1\]"):
        compute_fib(spec)


def test_grid_and_tree_sizes():
    grid = build_grid(2, 2)
    tree = build_tree(2, 2)
    assert (len(grid.nodes), len(grid.links)) == (4, 4)
    assert (len(tree.nodes), len(tree.links)) == (7, 6)
    assert tree.producers[0].node == 0
    assert tree.consumers[0].node == 6


def test_single_node_grid_is_rejected_at_scenario_validation():
    spec = build_grid(1, 1)
    assert len(spec.nodes) == 1 and not spec.links
    with pytest.raises(ConfigError):
        validate_scenario(spec, ScenarioConfig(strategy="best_route", agents=[]))


def test_generator_references():
    assert len(load_topology("grid:2x3").nodes) == 6
    assert len(load_topology("tree:1x3").nodes) == 4
    with pytest.raises(TopologyError):
        load_topology("/nonexistent/file.topo")


def test_sprint_round_trip():
    spec = load_topology("sprint")
    assert parse_topology(serialize_topology(spec)) == spec


@given(st.integers(min_value=1, max_value=4), st.integers(min_value=1, max_value=4))
def test_generated_grids_round_trip(rows, cols):
    spec = build_grid(rows, cols)
    assert parse_topology(serialize_topology(spec)) == spec


def test_analytic_rtt_along_consumer_best_path():
    spec = load_topology("sprint")
    fib = compute_fib(spec)
    path = best_path(fib, 0, "/prod0")
    assert path == [0, 3, 6, 2, 1]
    oracle = analytic_rtt(spec, path, 320, 8200)
    assert to_ms(oracle.propagation) == pytest.approx(53.51)
    assert to_ms(oracle.total) == pytest.approx(83.33)


def test_cheyenne_propagation_rtt():
    spec = load_topology("sprint")
    fib = compute_fib(spec, agent_nodes=[3])
    oracle = analytic_rtt(spec, best_path(fib, 3, "/prod0"), 320, 8200)
    assert to_ms(oracle.propagation) == pytest.approx(49.51)


def test_sprint_min_cut_is_the_access_bottleneck():
    assert bottleneck_capacity(load_topology("sprint"), 0, 1) == 2_000_000
