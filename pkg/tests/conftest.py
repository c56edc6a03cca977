"""Shared fixtures: tiny topologies and scenario factories."""

import pytest

from idqf.schemas import ScenarioConfig
from idqf.services.topology import AppDef, LinkDef, NodeDef, TopologySpec


def line_topology(n: int, delay_us: int = 10_000, bw_bps: int = 1_000_000, queue: int = 100) -> TopologySpec:
    """n routers in a row; consumer on node 0, producer on node n-1."""
    return TopologySpec(
        nodes=[NodeDef(i, f"n{i}") for i in range(n)],
        links=[LinkDef(i, i + 1, delay_us, bw_bps, queue) for i in range(n - 1)],
        consumers=[AppDef(0, "/prod0")],
        producers=[AppDef(n - 1, "/prod0")],
    )


def diamond_topology(fast_us: int = 5_000, slow_us: int = 20_000) -> TopologySpec:
    """
    0 - 1 - {2, 3} - 4 with the consumer on 0 and the producer on 4.

    Node 1 faces: 1 -> N0, 2 -> N2 (fast branch), 3 -> N3 (slow branch).
    """
    return TopologySpec(
        nodes=[NodeDef(i, f"d{i}") for i in range(5)],
        links=[
            LinkDef(0, 1, 2_000, 2_000_000),
            LinkDef(1, 2, fast_us, 1_000_000),
            LinkDef(1, 3, slow_us, 1_000_000),
            LinkDef(2, 4, fast_us, 1_000_000),
            LinkDef(3, 4, slow_us, 1_000_000),
        ],
        consumers=[AppDef(0, "/prod0")],
        producers=[AppDef(4, "/prod0")],
    )


@pytest.fixture
def line3() -> TopologySpec:
    return line_topology(3)


@pytest.fixture
def diamond() -> TopologySpec:
    return diamond_topology()


@pytest.fixture
def make_scenario():
    def factory(**overrides) -> ScenarioConfig:
        data = {
            "topology": "sprint",
            "duration_s": 5.0,
            "warmup_s": 1.0,
            "episodes": 2,
            "replicates": 1,
            "seed": 7,
        }
        data.update(overrides)
        return ScenarioConfig.model_validate(data)

    return factory
