import math

import pytest

from mthfl.config import load_preset
from mthfl.errors import ConfigError, CoverageError
from mthfl.topology import (Node, Tier, Topology, TopologyConfig, build_topology, grid_positions,
                            slant_distance, validate)

from conftest import line_topology


def test_tier_ordering():
    assert Tier.EDGE_DEVICE < Tier.LOCAL_AGGREGATOR < Tier.REGIONAL_SERVER < Tier.GLOBAL_SERVER


def test_client_inside_coverage_attaches_to_local_aggregator():
    topo = line_topology([500.0])
    client = topo.clients[0]
    assert topo.node(client.parent).tier == Tier.LOCAL_AGGREGATOR
    assert validate(topo) == []


def test_client_outside_coverage_raises_with_its_id():
    with pytest.raises(CoverageError) as err:
        line_topology([1500.0])
    assert err.value.client_ids == [3]


def test_mt_hfl_preset_serves_every_client_from_the_haps():
    cfg = load_preset("mt-hfl")
    topo = build_topology(cfg.topology)
    assert validate(topo) == []
    regional = topo.of_tier(Tier.REGIONAL_SERVER)
    assert len(regional) == 1 and regional[0].altitude == 25_000
    (serving,) = topo.of_tier(Tier.LOCAL_AGGREGATOR)
    assert serving.position == regional[0].position
    assert len(topo.children[serving.id]) == cfg.topology.num_clients


def test_terrestrial_preset_keeps_each_base_station_under_100_clients():
    topo = build_topology(load_preset("terrestrial-hfl").topology)
    assert validate(topo) == []
    for bs in topo.of_tier(Tier.LOCAL_AGGREGATOR):
        assert 0 < len(topo.children[bs.id]) < 100


def test_client_cap_rejects_overloaded_aggregator():
    cfg = TopologyConfig(num_clients=20, num_local=1, local_radius=5000.0, max_clients_per_local=10)
    with pytest.raises(ConfigError, match="serves 20 clients"):
        build_topology(cfg)


@pytest.mark.parametrize("field", ["num_clients", "num_local", "num_regional"])
def test_zero_counts_rejected(field):
    kwargs = dict(num_clients=2, num_local=1, num_regional=1)
    kwargs[field] = 0
    with pytest.raises(ConfigError, match=field):
        build_topology(TopologyConfig(**kwargs))


def test_assignment_is_deterministic_and_nearest_with_low_id_tiebreak():
    # client at x=0 is equidistant from aggregators at -100 and +100
    topo = line_topology([0.0, 90.0, -90.0], local_xs=[-100.0, 100.0])
    locals_ = [n.id for n in topo.of_tier(Tier.LOCAL_AGGREGATOR)]
    parents = [c.parent for c in topo.clients]
    assert parents == [locals_[0], locals_[1], locals_[0]]

    cfg = TopologyConfig(num_clients=50, num_local=4, seed=7)
    assert build_topology(cfg) == build_topology(cfg)
    assert build_topology(cfg) != build_topology(TopologyConfig(num_clients=50, num_local=4, seed=8))


def test_slant_distance():
    a = Node(0, Tier.EDGE_DEVICE, (0.0, 0.0, 0.0))
    assert slant_distance(a, a) == 0.0
    haps = Node(1, Tier.REGIONAL_SERVER, (0.0, 0.0, 25_000.0))
    assert slant_distance(a, haps) == 25_000.0
    far = Node(2, Tier.REGIONAL_SERVER, (10_000.0, 0.0, 25_000.0))
    assert slant_distance(a, far) == pytest.approx(26_925.8, abs=0.1)


def _tree(*specs):
    return Topology.from_nodes([Node(i, tier, (0.0, 0.0, 0.0), 1.0, parent)
                                for i, (tier, parent) in enumerate(specs)])


def test_validate_flags_parent_two_tiers_up():
    t = _tree((Tier.GLOBAL_SERVER, None), (Tier.REGIONAL_SERVER, 0), (Tier.LOCAL_AGGREGATOR, 1),
              (Tier.EDGE_DEVICE, 2), (Tier.EDGE_DEVICE, 1))
    problems = validate(t)
    assert len(problems) == 1 and problems[0].startswith("node 4:")


def test_validate_flags_second_global_server():
    t = _tree((Tier.GLOBAL_SERVER, None), (Tier.GLOBAL_SERVER, None), (Tier.REGIONAL_SERVER, 0),
              (Tier.LOCAL_AGGREGATOR, 2), (Tier.EDGE_DEVICE, 3))
    problems = validate(t)
    assert len(problems) == 1 and "global server" in problems[0]


def test_validate_flags_childless_aggregator():
    t = _tree((Tier.GLOBAL_SERVER, None), (Tier.REGIONAL_SERVER, 0), (Tier.LOCAL_AGGREGATOR, 1),
              (Tier.LOCAL_AGGREGATOR, 1), (Tier.EDGE_DEVICE, 2))
    assert validate(t) == ["node 3: LOCAL_AGGREGATOR has no children"]


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("num_local", [1, 3, 8])
def test_generated_topologies_are_valid(seed, num_local):
    cfg = TopologyConfig(num_clients=40, num_local=num_local, num_regional=min(2, num_local),
                         area_width=3000.0, area_height=2000.0, local_radius=1900.0, seed=seed)
    assert validate(build_topology(cfg)) == []


def test_grid_positions_cover_rectangle():
    pts = grid_positions(8, 4000.0, 2000.0, 30.0)
    assert len(pts) == 8
    worst = max(min(math.hypot(x - px, y - py) for px, py, _ in pts)
                for x in (0, 4000) for y in (0, 2000))
    assert worst <= 1000.0
