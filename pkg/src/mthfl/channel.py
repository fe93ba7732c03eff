"""Erasure-style link model (NLOS vs LOS outage), transmission delay and client compute delay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError
from .learner import ModelParams
from .topology import Node, Tier, slant_distance

SPEED_OF_LIGHT = 299_792_458.0  # m/s

DEFAULT_RATES = {
    (Tier.EDGE_DEVICE, Tier.LOCAL_AGGREGATOR): 1e6,
    (Tier.LOCAL_AGGREGATOR, Tier.REGIONAL_SERVER): 1e7,
    (Tier.REGIONAL_SERVER, Tier.GLOBAL_SERVER): 5e7,
}


@dataclass(frozen=True)
class ChannelConfig:
    los_altitude_threshold: float = 100.0
    nlos_outage: float = 0.3
    los_outage: float = 0.0
    # bits/s keyed by (lower tier, upper tier)
    rates: Mapping[tuple[Tier, Tier], float] = field(default_factory=lambda: dict(DEFAULT_RATES))
    bits_per_param: int = 32

    def __post_init__(self):
        for name in ("nlos_outage", "los_outage"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"channel.{name} must be in [0, 1], got {v}")
        for pair, rate in self.rates.items():
            if rate <= 0:
                raise ConfigError(f"data rate for {pair} must be > 0")
        if self.bits_per_param <= 0:
            raise ConfigError("channel.bits_per_param must be > 0")


@dataclass(frozen=True)
class LinkModel:
    los: bool
    outage_prob: float
    data_rate: float
    distance: float

    def __post_init__(self):
        if not 0.0 <= self.outage_prob <= 1.0:
            raise ConfigError(f"outage_prob must be in [0, 1], got {self.outage_prob}")
        if self.data_rate <= 0:
            raise ConfigError("data_rate must be > 0")
        if self.distance < 0:
            raise ConfigError("distance must be >= 0")


@dataclass(frozen=True)
class TxOutcome:
    success: bool
    delay: float


def link_for(a: Node, b: Node, cfg: ChannelConfig) -> LinkModel:
    """Link between two adjacent tree nodes.

    Ground-to-ground links (both ends below the LOS altitude threshold) are
    NLOS and use ``cfg.nlos_outage``; any link with an aerial endpoint is LOS.
    """
    lo, hi = sorted((a.tier, b.tier))
    if hi != lo + 1:
        raise ConfigError(f"nodes {a.id} and {b.id} are not on adjacent tiers")
    try:
        rate = cfg.rates[(lo, hi)]
    except KeyError:
        raise ConfigError(f"no data rate configured for {lo.name}<->{hi.name}") from None
    los = not (a.altitude < cfg.los_altitude_threshold and b.altitude < cfg.los_altitude_threshold)
    return LinkModel(los=los, outage_prob=cfg.los_outage if los else cfg.nlos_outage,
                     data_rate=rate, distance=slant_distance(a, b))


def tx_delay(link: LinkModel, payload_bits: float) -> float:
    return payload_bits / link.data_rate + link.distance / SPEED_OF_LIGHT


def sample_tx(link: LinkModel, payload_bits: float, rng: np.random.Generator) -> TxOutcome:
    """One transmission attempt; consumes exactly one uniform draw from ``rng``."""
    if payload_bits <= 0:
        raise ConfigError("payload_bits must be > 0")
    success = bool(rng.random() < 1.0 - link.outage_prob)
    return TxOutcome(success, tx_delay(link, payload_bits))


def compute_delay(node: Node, samples_processed: float, iterations: int) -> float:
    if node.tier != Tier.EDGE_DEVICE:
        raise ConfigError(f"node {node.id} is not an edge device")
    if node.compute_rate <= 0:
        raise ConfigError(f"node {node.id} has non-positive compute_rate")
    return iterations * samples_processed / node.compute_rate


def payload_bits(p: ModelParams, bits_per_param: int = 32) -> int:
    if bits_per_param <= 0:
        raise ConfigError("bits_per_param must be > 0")
    return len(p) * bits_per_param
