"""Tiered network graph: clients, local aggregators, regional servers, global server."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from types import MappingProxyType
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, CoverageError

Position = tuple[float, float, float]

# Edge devices sit on the ground; anything above this is a misplaced client.
EDGE_MAX_ALTITUDE = 10.0


class Tier(IntEnum):
    EDGE_DEVICE = 0
    LOCAL_AGGREGATOR = 1
    REGIONAL_SERVER = 2
    GLOBAL_SERVER = 3


@dataclass(frozen=True)
class Node:
    id: int
    tier: Tier
    position: Position
    compute_rate: float = 0.0
    parent: Optional[int] = None

    @property
    def altitude(self) -> float:
        return self.position[2]


@dataclass(frozen=True)
class Topology:
    nodes: tuple[Node, ...]
    children: Mapping[int, tuple[int, ...]] = field(default_factory=dict)

    @classmethod
    def from_nodes(cls, nodes: Sequence[Node]) -> "Topology":
        kids: dict[int, list[int]] = {n.id: [] for n in nodes}
        for n in nodes:
            if n.parent is not None and n.parent in kids:
                kids[n.parent].append(n.id)
        frozen = {k: tuple(sorted(v)) for k, v in kids.items()}
        return cls(nodes=tuple(nodes), children=MappingProxyType(frozen))

    def node(self, node_id: int) -> Node:
        return self.nodes[node_id]

    def of_tier(self, tier: Tier) -> list[Node]:
        return [n for n in self.nodes if n.tier == tier]

    @property
    def clients(self) -> list[Node]:
        return self.of_tier(Tier.EDGE_DEVICE)

    @property
    def root(self) -> Node:
        return self.of_tier(Tier.GLOBAL_SERVER)[0]

    def parent(self, node_id: int) -> Optional[Node]:
        p = self.nodes[node_id].parent
        return None if p is None else self.nodes[p]


@dataclass(frozen=True)
class TopologyConfig:
    """Counts, geometry and compute capacity for :func:`build_topology`.

    Aggregator positions default to a regular grid over the placement
    rectangle ``[0, area_width] x [0, area_height]``; explicit positions
    override the grid. Client positions are uniform random unless given.
    """

    num_clients: int
    num_local: int
    num_regional: int = 1
    num_global: int = 1
    area_width: float = 2000.0
    area_height: float = 2000.0
    local_radius: float = 1000.0
    local_altitude: float = 30.0
    regional_altitude: float = 25_000.0
    global_altitude: float = 550_000.0
    compute_rate_min: float = 100.0
    compute_rate_max: float = 100.0
    max_clients_per_local: int = 0
    seed: int = 0
    local_positions: Optional[tuple[Position, ...]] = None
    regional_positions: Optional[tuple[Position, ...]] = None
    client_positions: Optional[tuple[Position, ...]] = None


def slant_distance(a: Node, b: Node) -> float:
    return math.dist(a.position, b.position)


def _horizontal(a: Position, b: Position) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def grid_positions(count: int, width: float, height: float, altitude: float) -> list[Position]:
    """Centres of a near-square grid of ``count`` cells over the rectangle, row-major."""
    if count <= 0:
        return []
    aspect = width / height if height > 0 else 1.0
    cols = min(count, max(1, math.ceil(math.sqrt(count * aspect))))
    rows = math.ceil(count / cols)
    cw, ch = width / cols, height / rows
    out = []
    for i in range(count):
        r, c = divmod(i, cols)
        out.append(((c + 0.5) * cw, (r + 0.5) * ch, altitude))
    return out


def _nearest(point: Position, candidates: Sequence[Node], radius: float | None) -> Optional[Node]:
    best, best_d = None, math.inf
    for cand in candidates:  # ascending id, so strict < keeps the lowest id on ties
        d = _horizontal(point, cand.position)
        if radius is not None and d > radius:
            continue
        if d < best_d:
            best, best_d = cand, d
    return best


def _check_config(cfg: TopologyConfig) -> None:
    for name in ("num_clients", "num_local", "num_regional"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"topology.{name} must be >= 1, got {getattr(cfg, name)}")
    if cfg.num_global != 1:
        raise ConfigError(f"topology.num_global must be exactly 1, got {cfg.num_global}")
    if cfg.area_width <= 0 or cfg.area_height <= 0:
        raise ConfigError("topology placement area must have positive width and height")
    if cfg.local_radius <= 0:
        raise ConfigError("topology.local_radius must be > 0")
    if not 0 < cfg.compute_rate_min <= cfg.compute_rate_max:
        raise ConfigError("topology compute rates must satisfy 0 < min <= max")
    for name, want in (("local_positions", cfg.num_local), ("regional_positions", cfg.num_regional),
                       ("client_positions", cfg.num_clients)):
        given = getattr(cfg, name)
        if given is not None and len(given) != want:
            raise ConfigError(f"topology.{name} lists {len(given)} positions, expected {want}")


def build_topology(cfg: TopologyConfig) -> Topology:
    """Place nodes and wire the tree GlobalServer -> RegionalServer -> LocalAggregator -> EdgeDevice.

    Ids are dense: the global server is 0, then regional servers, local
    aggregators and finally clients. Each client attaches to the nearest
    local aggregator whose coverage disk (horizontal distance) contains it;
    each local aggregator attaches to the nearest regional server.
    """
    _check_config(cfg)
    rng = np.random.default_rng(cfg.seed)

    w, h = cfg.area_width, cfg.area_height
    root = Node(0, Tier.GLOBAL_SERVER, (w / 2, h / 2, cfg.global_altitude))

    reg_pos = cfg.regional_positions or grid_positions(cfg.num_regional, w, h, cfg.regional_altitude)
    regionals = [Node(1 + i, Tier.REGIONAL_SERVER, tuple(map(float, p)), parent=0)
                 for i, p in enumerate(reg_pos)]

    base = 1 + cfg.num_regional
    loc_pos = cfg.local_positions or grid_positions(cfg.num_local, w, h, cfg.local_altitude)
    locals_ = []
    for i, p in enumerate(loc_pos):
        p = tuple(map(float, p))
        parent = _nearest(p, regionals, None)
        locals_.append(Node(base + i, Tier.LOCAL_AGGREGATOR, p, parent=parent.id))

    if cfg.client_positions is not None:
        cli_pos = [tuple(map(float, p)) for p in cfg.client_positions]
    else:
        xy = rng.uniform((0.0, 0.0), (w, h), size=(cfg.num_clients, 2))
        cli_pos = [(float(x), float(y), 0.0) for x, y in xy]
    rates = rng.uniform(cfg.compute_rate_min, cfg.compute_rate_max, size=cfg.num_clients)

    base += cfg.num_local
    clients, uncovered = [], []
    for i, p in enumerate(cli_pos):
        agg = _nearest(p, locals_, cfg.local_radius)
        if agg is None:
            uncovered.append(base + i)
            continue
        clients.append(Node(base + i, Tier.EDGE_DEVICE, p, float(rates[i]), parent=agg.id))
    if uncovered:
        raise CoverageError(uncovered)

    topo = Topology.from_nodes([root, *regionals, *locals_, *clients])
    if cfg.max_clients_per_local > 0:
        for agg in locals_:
            served = len(topo.children[agg.id])
            if served > cfg.max_clients_per_local:
                raise ConfigError(
                    f"local aggregator {agg.id} serves {served} clients, "
                    f"limit is {cfg.max_clients_per_local}")
    return topo


def validate(t: Topology) -> list[str]:
    """Return human-readable invariant violations; empty means the topology is valid."""
    problems: list[str] = []
    ids = [n.id for n in t.nodes]
    if ids != list(range(len(ids))):
        problems.append("node ids are not dense from 0 in order")
        return problems
    roots = [n.id for n in t.nodes if n.tier == Tier.GLOBAL_SERVER]
    if len(roots) != 1:
        problems.append(f"expected exactly one global server, found {len(roots)}: {roots}")

    for n in t.nodes:
        if n.tier == Tier.GLOBAL_SERVER:
            if n.parent is not None:
                problems.append(f"node {n.id}: global server has a parent")
            continue
        if n.parent is None or not 0 <= n.parent < len(t.nodes):
            problems.append(f"node {n.id}: missing or unknown parent")
            continue
        ptier = t.nodes[n.parent].tier
        if ptier != n.tier + 1:
            problems.append(f"node {n.id}: parent {n.parent} is tier {ptier.name}, "
                            f"expected {Tier(n.tier + 1).name}")
        if n.tier == Tier.EDGE_DEVICE:
            if n.compute_rate <= 0:
                problems.append(f"node {n.id}: client compute_rate must be > 0")
            if abs(n.altitude) > EDGE_MAX_ALTITUDE:
                problems.append(f"node {n.id}: client altitude {n.altitude} m is not ground level")

    for n in t.nodes:
        kids = t.children.get(n.id, ())
        if n.tier == Tier.EDGE_DEVICE and kids:
            problems.append(f"node {n.id}: client has children")
        elif n.tier == Tier.GLOBAL_SERVER and len(roots) != 1:
            continue  # already reported as a duplicate root
        elif n.tier != Tier.EDGE_DEVICE and not kids:
            problems.append(f"node {n.id}: {n.tier.name} has no children")

    # Reachability from the root catches cycles and disconnected parts.
    if len(roots) == 1 and not problems:
        seen, stack = set(), [roots[0]]
        while stack:
            cur = stack.pop()
            if cur in seen:
                problems.append(f"node {cur}: reached twice, not a tree")
                break
            seen.add(cur)
            stack.extend(t.children.get(cur, ()))
        missing = sorted(set(ids) - seen)
        if missing:
            problems.append(f"nodes unreachable from the global server: {missing}")
    return problems
