import numpy as np
import pytest

from mthfl.channel import ChannelConfig
from mthfl.datagen import Dataset, Shard, generate_synthetic
from mthfl.engine import ProtocolConfig, init_state
from mthfl.learner import init_params
from mthfl.topology import TopologyConfig, build_topology


def line_topology(client_xs, radius=1000.0, num_local=1, local_xs=None, num_regional=1):
    """Clients on the x axis under ground aggregators; everything else at default positions."""
    local_xs = local_xs if local_xs is not None else [0.0] * num_local
    cfg = TopologyConfig(
        num_clients=len(client_xs), num_local=len(local_xs), num_regional=num_regional,
        local_radius=radius, local_positions=tuple((x, 0.0, 30.0) for x in local_xs),
        client_positions=tuple((x, 0.0, 0.0) for x in client_xs))
    return build_topology(cfg)


def make_state(topo, sizes, d=4, k=3, seed=0, outage=0.0, init_scale=0.1, data_seed=1, **proto):
    """Engine state whose clients own consecutive row blocks of the given sizes."""
    n = sum(sizes)
    ds = generate_synthetic(data_seed, max(n, k), d, k, class_sep=2.0)
    shards, start = [], 0
    for c, size in zip(topo.clients, sizes):
        shards.append(Shard(c.id, tuple(range(start, start + size))))
        start += size
    channel = ChannelConfig(nlos_outage=outage, los_outage=outage)
    model = init_params(d, k, seed=seed + 100, scale=init_scale)
    return init_state(topo, ds, shards, model, seed, ProtocolConfig(channel, **proto))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance criteria register their outcome here; printed once at the end of the session.
CRITERIA: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
