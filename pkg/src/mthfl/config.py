"""Experiment configuration: the ``section.key = value`` text format and bundled presets.

Lines are ``section.key = value``; ``#`` starts a comment. Booleans are
``true``/``false``, lists are comma-separated, optional reals accept
``none``. Positions are written ``x y z`` and separated by commas.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Callable, Optional

from .channel import ChannelConfig
from .engine import FailureMode, HierarchySpec, ProtocolConfig, SelectionKind, SelectionPolicy
from .errors import ConfigError, ParseError, ValidationError
from .learner import TrainSpec
from .topology import Tier, TopologyConfig

PRESETS = ("mt-hfl", "terrestrial-hfl")
SECTIONS = ("experiment", "topology", "data", "training", "channel", "hierarchy", "selection")


@dataclass(frozen=True)
class DataConfig:
    n: int = 20_000
    d: int = 32
    k: int = 10
    class_sep: float = 1.0
    alpha: float = 1.0
    min_size: int = 5
    holdout: float = 0.2
    path: Optional[str] = None


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.05
    local_iterations: int = 5
    batch_size: int = 20
    max_rounds: int = 120
    target_accuracy: Optional[float] = None
    init_scale: float = 0.0

    @property
    def spec(self) -> TrainSpec:
        return TrainSpec(self.learning_rate, self.local_iterations, self.batch_size)


@dataclass(frozen=True)
class FullScale:
    num_clients: int
    num_local: int
    area_width: float
    area_height: float
    n: int


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int = 0
    topology: TopologyConfig = field(default_factory=lambda: TopologyConfig(num_clients=200, num_local=1))
    data: DataConfig = field(default_factory=DataConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    hierarchy: HierarchySpec = field(default_factory=HierarchySpec)
    selection: SelectionPolicy = field(default_factory=SelectionPolicy)
    full_scale: Optional[FullScale] = None

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seed=seed)

    def with_selection_count(self, count: int) -> "ExperimentConfig":
        frac = count / self.topology.num_clients
        return dataclasses.replace(self, selection=dataclasses.replace(self.selection, fraction=frac))

    def with_overrides(self, **sections) -> "ExperimentConfig":
        """Replace fields inside sections, e.g. ``with_overrides(channel={"nlos_outage": 0.6})``."""
        cfg = self
        for section, values in sections.items():
            if section == "channel":
                ch = dataclasses.replace(cfg.protocol.channel, **values)
                cfg = dataclasses.replace(cfg, protocol=dataclasses.replace(cfg.protocol, channel=ch))
            else:
                sub = dataclasses.replace(getattr(cfg, section), **values)
                cfg = dataclasses.replace(cfg, **{section: sub})
        return cfg

    def scaled_up(self) -> "ExperimentConfig":
        if self.full_scale is None:
            raise ConfigError(f"scenario {self.name!r} defines no full_scale section")
        fs = self.full_scale
        topo = dataclasses.replace(self.topology, num_clients=fs.num_clients, num_local=fs.num_local,
                                   area_width=fs.area_width, area_height=fs.area_height,
                                   local_positions=None, client_positions=None)
        return dataclasses.replace(self, topology=topo, data=dataclasses.replace(self.data, n=fs.n))


# ---------------------------------------------------------------------------
# value parsers

def _int(s: str) -> int:
    return int(s)


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _opt_float(s: str) -> Optional[float]:
    return None if s.lower() == "none" else _float(s)


def _opt_str(s: str) -> Optional[str]:
    return None if s.lower() == "none" else s


def _bool(s: str) -> bool:
    if s not in ("true", "false"):
        raise ValueError("expected true or false")
    return s == "true"


def _positions(s: str) -> Optional[tuple]:
    if s.lower() == "none":
        return None
    out = []
    for item in s.split(","):
        parts = item.split()
        if len(parts) != 3:
            raise ValueError(f"position {item.strip()!r} needs three numbers 'x y z'")
        out.append(tuple(_float(p) for p in parts))
    return tuple(out)


def _ge(lo):
    return lambda v: v >= lo, f">= {lo}"


def _gt(lo):
    return lambda v: v > lo, f"> {lo}"


def _unit():
    return lambda v: 0.0 <= v <= 1.0, "in [0, 1]"


def _any():
    return lambda v: True, ""


def _opt(check):
    fn, desc = check
    return lambda v: v is None or fn(v), desc


# key -> (parser, check); every key in a section is optional and defaults to the dataclass default
SCHEMA: dict[str, tuple[Callable[[str], Any], tuple]] = {
    "experiment.name": (str, _any()),
    "experiment.seed": (_int, _ge(0)),
    "topology.num_clients": (_int, _ge(1)),
    "topology.num_local": (_int, _ge(1)),
    "topology.num_regional": (_int, _ge(1)),
    "topology.num_global": (_int, (lambda v: v == 1, "exactly 1")),
    "topology.area_width": (_float, _gt(0)),
    "topology.area_height": (_float, _gt(0)),
    "topology.local_radius": (_float, _gt(0)),
    "topology.local_altitude": (_float, _ge(0)),
    "topology.regional_altitude": (_float, _ge(0)),
    "topology.global_altitude": (_float, _ge(0)),
    "topology.compute_rate_min": (_float, _gt(0)),
    "topology.compute_rate_max": (_float, _gt(0)),
    "topology.max_clients_per_local": (_int, _ge(0)),
    "topology.local_positions": (_positions, _any()),
    "topology.regional_positions": (_positions, _any()),
    "topology.client_positions": (_positions, _any()),
    "data.n": (_int, _ge(2)),
    "data.d": (_int, _ge(1)),
    "data.k": (_int, _ge(2)),
    "data.class_sep": (_float, _ge(0)),
    "data.alpha": (_float, _gt(0)),
    "data.min_size": (_int, _ge(1)),
    "data.holdout": (_float, (lambda v: 0 <= v < 1, "in [0, 1)")),
    "data.path": (_opt_str, _any()),
    "training.learning_rate": (_float, _gt(0)),
    "training.local_iterations": (_int, _ge(1)),
    "training.batch_size": (_int, _ge(1)),
    "training.max_rounds": (_int, _ge(0)),
    "training.target_accuracy": (_opt_float, _opt(_unit())),
    "training.init_scale": (_float, _ge(0)),
    "channel.los_altitude_threshold": (_float, _ge(0)),
    "channel.nlos_outage": (_float, _unit()),
    "channel.los_outage": (_float, _unit()),
    "channel.rate_client_local": (_float, _gt(0)),
    "channel.rate_local_regional": (_float, _gt(0)),
    "channel.rate_regional_global": (_float, _gt(0)),
    "channel.bits_per_param": (_int, _ge(1)),
    "channel.failure_mode": (str, (lambda v: v in ("drop", "retransmit"), "drop or retransmit")),
    "channel.max_attempts": (_int, _ge(1)),
    "hierarchy.regional_period": (_int, _ge(1)),
    "hierarchy.global_period": (_int, _ge(1)),
    "selection.policy": (str, (lambda v: v in ("uniform", "reliability"), "uniform or reliability")),
    "selection.fraction": (_float, (lambda v: 0 < v <= 1, "in (0, 1]")),
    "full_scale.num_clients": (_int, _ge(1)),
    "full_scale.num_local": (_int, _ge(1)),
    "full_scale.area_width": (_float, _gt(0)),
    "full_scale.area_height": (_float, _gt(0)),
    "full_scale.n": (_int, _ge(2)),
}


def parse_values(text: str) -> dict[str, Any]:
    """Tokenise and type-check config text into ``{"section.key": value}``."""
    syntax, problems = [], []
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            syntax.append(f"line {lineno}: expected 'section.key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key.count(".") != 1 or not all(key.split(".")):
            syntax.append(f"line {lineno}: key {key!r} is not of the form section.key")
            continue
        if key not in SCHEMA:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in values:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        parser, (check, desc) = SCHEMA[key]
        try:
            v = parser(value)
        except ValueError as exc:
            problems.append(f"line {lineno}: {key}: cannot parse {value!r} ({exc})")
            continue
        if not check(v):
            problems.append(f"line {lineno}: {key} = {value} out of range (must be {desc})")
            continue
        values[key] = v
    if syntax:
        raise ParseError(syntax)
    if problems:
        raise ValidationError(problems)
    return values


def _section(values: dict[str, Any], name: str) -> dict[str, Any]:
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in values.items() if k.startswith(prefix)}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate config text; raises ParseError or ValidationError listing every problem."""
    values = parse_values(text)
    problems = [f"missing section {s!r}" for s in SECTIONS if not _section(values, s)]
    if "experiment.name" not in values:
        problems.append("missing key 'experiment.name'")
    if problems:
        raise ValidationError(problems)

    exp = _section(values, "experiment")
    topo = _section(values, "topology")
    ch = _section(values, "channel")
    rates = {
        (Tier.EDGE_DEVICE, Tier.LOCAL_AGGREGATOR): ch.pop("rate_client_local", 1e6),
        (Tier.LOCAL_AGGREGATOR, Tier.REGIONAL_SERVER): ch.pop("rate_local_regional", 1e7),
        (Tier.REGIONAL_SERVER, Tier.GLOBAL_SERVER): ch.pop("rate_regional_global", 5e7),
    }
    failure = ch.pop("failure_mode", "drop")
    attempts = ch.pop("max_attempts", 8)
    sel = _section(values, "selection")
    fs = _section(values, "full_scale")
    if fs and len(fs) != len(dataclasses.fields(FullScale)):
        raise ValidationError(["full_scale section must set num_clients, num_local, "
                               "area_width, area_height and n together"])
    try:
        topo.setdefault("num_clients", 200)
        topo.setdefault("num_local", 1)
        cfg = ExperimentConfig(
            name=exp["name"],
            seed=exp.get("seed", 0),
            topology=TopologyConfig(**topo),
            data=DataConfig(**_section(values, "data")),
            training=TrainingConfig(**_section(values, "training")),
            protocol=ProtocolConfig(ChannelConfig(rates=rates, **ch), FailureMode(failure), attempts),
            hierarchy=HierarchySpec(**_section(values, "hierarchy")),
            selection=SelectionPolicy(SelectionKind(sel.get("policy", "uniform")),
                                      sel.get("fraction", 1.0)),
            full_scale=FullScale(**fs) if fs else None,
        )
        cfg.training.spec  # noqa: B018 - validates the combination
    except ConfigError as exc:
        raise ValidationError([str(exc)]) from None
    if cfg.topology.compute_rate_min > cfg.topology.compute_rate_max:
        raise ValidationError(["topology.compute_rate_min exceeds topology.compute_rate_max"])
    if cfg.data.n < cfg.data.k:
        raise ValidationError([f"data.n = {cfg.data.n} is smaller than data.k = {cfg.data.k}"])
    return cfg


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("mthfl.presets").joinpath(f"{name}.cfg").read_text(encoding="utf-8")


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_text(name))
