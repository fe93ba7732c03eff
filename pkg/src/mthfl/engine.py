"""Synchronous multi-tier hierarchical FL rounds with lossy client uplinks and delay accounting."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .channel import ChannelConfig, LinkModel, compute_delay, link_for, payload_bits, sample_tx, tx_delay
from .datagen import Dataset, Shard
from .errors import ConfigError, EmptyAggregateError
from .learner import ModelParams, TrainSpec, evaluate, local_train_many, weighted_average
from .topology import Tier, Topology

log = logging.getLogger(__name__)


class SelectionKind(str, Enum):
    UNIFORM = "uniform"
    RELIABILITY = "reliability"


@dataclass(frozen=True)
class SelectionPolicy:
    kind: SelectionKind = SelectionKind.UNIFORM
    fraction: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SelectionKind(self.kind))
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigError(f"selection fraction must be in (0, 1], got {self.fraction}")

    def count(self, n: int) -> int:
        # tolerance keeps count/n round-trips from bumping the ceiling
        return min(n, max(1, math.ceil(self.fraction * n - 1e-9)))


@dataclass(frozen=True)
class HierarchySpec:
    """Aggregation periods in rounds. Local aggregators always aggregate every round."""

    regional_period: int = 1
    global_period: int = 1

    def __post_init__(self):
        if self.regional_period < 1 or self.global_period < 1:
            raise ConfigError("aggregation periods must be >= 1")
        if self.global_period % self.regional_period:
            raise ConfigError(f"global period {self.global_period} is not a multiple of "
                              f"regional period {self.regional_period}")

    @property
    def level_periods(self) -> dict[Tier, int]:
        return {Tier.LOCAL_AGGREGATOR: 1, Tier.REGIONAL_SERVER: self.regional_period,
                Tier.GLOBAL_SERVER: self.global_period}


class FailureMode(str, Enum):
    DROP = "drop"
    RETRANSMIT = "retransmit"


@dataclass(frozen=True)
class ProtocolConfig:
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    failure_mode: FailureMode = FailureMode.DROP
    max_attempts: int = 8

    def __post_init__(self):
        object.__setattr__(self, "failure_mode", FailureMode(self.failure_mode))
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")


@dataclass
class RoundMetrics:
    round: int
    global_loss: float
    global_accuracy: float
    selected: int = 0
    delivered: int = 0
    failed: int = 0
    round_comm_delay: float = 0.0
    round_comp_delay: float = 0.0
    cumulative_delay: float = 0.0
    test_loss: Optional[float] = None
    test_accuracy: Optional[float] = None
    stalled: int = 0
    delivered_ids: tuple[int, ...] = ()
    # aggregator id -> total weight it used when it fired this round
    weight_totals: dict[int, float] = field(default_factory=dict)


def node_rng(seed: int, node_id: int, round_index: int) -> np.random.Generator:
    """Independent stream owned by one node for one round."""
    return np.random.default_rng(np.random.SeedSequence([seed, node_id, round_index]))


@dataclass
class EngineState:
    topology: Topology
    train: Dataset
    shards: dict[int, np.ndarray]
    models: dict[int, ModelParams]
    seed: int
    protocol: ProtocolConfig
    test: Optional[Dataset] = None
    round: int = 0
    comm_delay: float = 0.0
    comp_delay: float = 0.0
    uplinks: dict[int, LinkModel] = field(default_factory=dict)
    # samples folded into each aggregator's model since its parent last aggregated it
    pending: dict[int, float] = field(default_factory=dict)

    @property
    def cumulative_delay(self) -> float:
        return self.comm_delay + self.comp_delay

    @property
    def global_model(self) -> ModelParams:
        return self.models[self.topology.root.id]


def init_state(topology: Topology, train: Dataset, shards: Sequence[Shard], model: ModelParams,
               seed: int, protocol: ProtocolConfig, test: Optional[Dataset] = None) -> EngineState:
    by_client = {s.client_id: np.asarray(s.indices, dtype=np.int64) for s in shards}
    client_ids = [c.id for c in topology.clients]
    if sorted(by_client) != client_ids:
        raise ConfigError("shards must map one-to-one onto the topology's clients")
    aggs = [n.id for n in topology.nodes if n.tier != Tier.EDGE_DEVICE]
    uplinks = {c.id: link_for(c, topology.parent(c.id), protocol.channel) for c in topology.clients}
    return EngineState(topology=topology, train=train, shards=by_client,
                       models={a: model for a in aggs}, seed=seed, protocol=protocol,
                       test=test, uplinks=uplinks, pending={a: 0.0 for a in aggs})


def select_clients(t: Topology, policy: SelectionPolicy, links: Mapping[int, LinkModel],
                   rng: np.random.Generator) -> list[int]:
    """Pick ``ceil(fraction * N)`` clients without replacement, returned in ascending id order."""
    ids = np.array([c.id for c in t.clients])
    m = policy.count(ids.size)
    if m == ids.size:
        return ids.tolist()
    if policy.kind == SelectionKind.UNIFORM:
        picked = rng.choice(ids, size=m, replace=False)
    else:
        w = np.array([1.0 - links[i].outage_prob for i in ids])
        nonzero = np.count_nonzero(w)
        if nonzero >= m:
            picked = rng.choice(ids, size=m, replace=False, p=w / w.sum())
        else:
            # Not enough usable clients: take them all and fill uniformly from the rest.
            rest = rng.choice(ids[w == 0], size=m - nonzero, replace=False)
            picked = np.concatenate([ids[w > 0], rest])
    return sorted(int(i) for i in picked)


def evaluation_model(state: EngineState) -> ModelParams:
    """Sample-weighted mean of the regional models (the global model right after a sync)."""
    t = state.topology
    regionals = [n.id for n in t.of_tier(Tier.REGIONAL_SERVER)]
    sizes = {}
    for r in regionals:
        sizes[r] = sum(state.shards[c].size for l in t.children[r] for c in t.children[l])
    return weighted_average([state.models[r] for r in regionals], [sizes[r] for r in regionals])


def _evaluate_into(metrics: RoundMetrics, state: EngineState, model: ModelParams) -> None:
    metrics.global_loss, metrics.global_accuracy = evaluate(
        model, state.train.features, state.train.labels)
    if state.test is not None:
        metrics.test_loss, metrics.test_accuracy = evaluate(
            model, state.test.features, state.test.labels)


def initial_metrics(state: EngineState) -> RoundMetrics:
    m = RoundMetrics(round=state.round, global_loss=0.0, global_accuracy=0.0,
                     cumulative_delay=state.cumulative_delay)
    _evaluate_into(m, state, evaluation_model(state))
    return m


def _aggregate(state: EngineState, parent: int, children: Sequence[int],
               models: Mapping[int, ModelParams], weights: Mapping[int, float],
               metrics: RoundMetrics) -> bool:
    """Replace ``parent``'s model with the weighted mean of its children; False if it stalled."""
    kids = [c for c in children if weights.get(c, 0) > 0]
    try:
        state.models[parent] = weighted_average([models[c] for c in kids], [weights[c] for c in kids])
    except EmptyAggregateError:
        metrics.stalled += 1
        return False
    used = float(sum(weights[c] for c in kids))
    metrics.weight_totals[parent] = used
    state.pending[parent] += used
    return True


def _push_down(state: EngineState, node: int) -> None:
    model = state.models[node]
    stack = list(state.topology.children[node])
    while stack:
        cur = stack.pop()
        if cur in state.models:
            state.models[cur] = model
            stack.extend(state.topology.children[cur])


def run_round(state: EngineState, spec: TrainSpec, hier: HierarchySpec,
              policy: SelectionPolicy) -> RoundMetrics:
    """Advance ``state`` by one synchronous round and return that round's metrics.

    Order: downlink broadcast, local SGD, lossy uplink, local aggregation,
    then regional/global aggregation when their periods divide the round
    index. Regional and global aggregation push their model down to every
    aggregator beneath them. Aggregators that receive no update keep their
    previous model and are counted as stalled.
    """
    t = state.topology
    r = state.round + 1
    proto = state.protocol
    root = t.root.id
    bits = payload_bits(state.global_model, proto.channel.bits_per_param)

    selected = select_clients(t, policy, state.uplinks, node_rng(state.seed, root, r))
    metrics = RoundMetrics(round=r, global_loss=0.0, global_accuracy=0.0, selected=len(selected))

    # (1) downlink from each client's serving aggregator; broadcasts never fail
    downlink = max(tx_delay(state.uplinks[c], bits) for c in selected)

    # (2) local training, one rng stream per client, results consumed in id order
    rngs = [node_rng(state.seed, c, r) for c in selected]
    parents = [t.nodes[c].parent for c in selected]
    start = np.stack([state.models[p].values for p in parents])
    shards = [state.shards[c] for c in selected]
    trained = local_train_many(start, state.train.d, state.train.k, state.train.features,
                               state.train.labels, shards, spec, rngs)
    d, k = state.train.d, state.train.k

    # (3) uplink, continuing each client's stream after its training draws
    uplink = 0.0
    delivered: dict[int, ModelParams] = {}
    for i, c in enumerate(selected):
        link = state.uplinks[c]
        attempts = proto.max_attempts if proto.failure_mode == FailureMode.RETRANSMIT else 1
        spent, ok = 0.0, False
        for _ in range(attempts):
            out = sample_tx(link, bits, rngs[i])
            spent += out.delay
            if out.success:
                ok = True
                break
        uplink = max(uplink, spent)
        if ok:
            delivered[c] = ModelParams(trained[i], d, k)
    metrics.delivered = len(delivered)
    metrics.delivered_ids = tuple(delivered)
    metrics.failed = metrics.selected - metrics.delivered

    # (4) local aggregation, weighted by shard size
    client_weights = {c: float(state.shards[c].size) for c in delivered}
    for agg in t.of_tier(Tier.LOCAL_AGGREGATOR):
        _aggregate(state, agg.id, t.children[agg.id], delivered, client_weights, metrics)

    # (5) periodic regional and global aggregation
    hops = 0.0
    if r % hier.regional_period == 0:
        hops += _hop_delay(state, Tier.LOCAL_AGGREGATOR, bits)
        for reg in t.of_tier(Tier.REGIONAL_SERVER):
            kids = t.children[reg.id]
            if _aggregate(state, reg.id, kids, state.models, state.pending, metrics):
                for kid in kids:
                    state.pending[kid] = 0.0
                _push_down(state, reg.id)
    if r % hier.global_period == 0:
        hops += _hop_delay(state, Tier.REGIONAL_SERVER, bits)
        kids = t.children[root]
        if _aggregate(state, root, kids, state.models, state.pending, metrics):
            for kid in kids:
                state.pending[kid] = 0.0
            state.pending[root] = 0.0
            _push_down(state, root)

    # (6) straggler delays
    metrics.round_comp_delay = max(
        compute_delay(t.nodes[c], min(spec.batch_size, state.shards[c].size), spec.local_iterations)
        for c in selected)
    metrics.round_comm_delay = downlink + uplink + hops
    state.comm_delay += metrics.round_comm_delay
    state.comp_delay += metrics.round_comp_delay
    state.round = r
    metrics.cumulative_delay = state.cumulative_delay

    # (7) evaluation
    fired_global = r % hier.global_period == 0
    _evaluate_into(metrics, state, state.global_model if fired_global else evaluation_model(state))
    return metrics


def _hop_delay(state: EngineState, tier: Tier, bits: float) -> float:
    t = state.topology
    ch = state.protocol.channel
    return max(tx_delay(link_for(n, t.parent(n.id), ch), bits) for n in t.of_tier(tier))


def delay_to_target(metrics: Sequence[RoundMetrics], target: float) -> Optional[float]:
    """Cumulative delay at the first round (>= 1) reaching ``target`` accuracy, else None."""
    r = rounds_to_target(metrics, target)
    return None if r is None else next(m.cumulative_delay for m in metrics if m.round == r)


def rounds_to_target(metrics: Sequence[RoundMetrics], target: float) -> Optional[int]:
    for m in metrics:
        if m.round >= 1 and m.global_accuracy >= target:
            return m.round
    return None
