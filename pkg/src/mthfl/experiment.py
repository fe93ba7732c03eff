"""Wire a config into topology, data and engine state, then run rounds."""

from __future__ import annotations

import dataclasses
import logging

import numpy as np

from .config import ExperimentConfig
from .datagen import Dataset, generate_synthetic, load_dataset, partition_dirichlet, train_test_split
from .engine import EngineState, RoundMetrics, init_state, initial_metrics, run_round
from .errors import ConfigError
from .learner import init_params
from .topology import build_topology

log = logging.getLogger(__name__)

# Sub-stream tags so topology, data, split, partition and init never share draws.
_TOPOLOGY, _DATA, _SPLIT, _PARTITION, _INIT = range(5)


def sub_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


def load_data(cfg: ExperimentConfig) -> Dataset:
    dc = cfg.data
    if dc.path:
        ds = load_dataset(dc.path)
    else:
        ds = generate_synthetic(sub_seed(cfg.seed, _DATA), dc.n, dc.d, dc.k, dc.class_sep)
    return ds


def prepare(cfg: ExperimentConfig) -> EngineState:
    topo = build_topology(dataclasses.replace(cfg.topology, seed=sub_seed(cfg.seed, _TOPOLOGY)))
    ds = load_data(cfg)
    train, test = train_test_split(ds, cfg.data.holdout, sub_seed(cfg.seed, _SPLIT))
    clients = [c.id for c in topo.clients]
    shards = partition_dirichlet(train, len(clients), cfg.data.alpha, cfg.data.min_size,
                                 sub_seed(cfg.seed, _PARTITION), client_ids=clients)
    model = init_params(ds.d, ds.k, sub_seed(cfg.seed, _INIT), cfg.training.init_scale)
    return init_state(topo, train, shards, model, cfg.seed, cfg.protocol, test=test)


def run_experiment(cfg: ExperimentConfig) -> list[RoundMetrics]:
    """Round-0 evaluation followed by rounds until ``max_rounds`` or the target accuracy."""
    state = prepare(cfg)
    tc = cfg.training
    spec = tc.spec
    if tc.target_accuracy is not None and not 0 <= tc.target_accuracy <= 1:
        raise ConfigError("target_accuracy must lie in [0, 1]")
    history = [initial_metrics(state)]
    for _ in range(tc.max_rounds):
        m = run_round(state, spec, cfg.hierarchy, cfg.selection)
        history.append(m)
        if tc.target_accuracy is not None and m.global_accuracy >= tc.target_accuracy:
            log.info("%s: target %.3f reached at round %d", cfg.name, tc.target_accuracy, m.round)
            break
    return history
