"""Multinomial logistic regression: parameters, loss/gradient, local SGD, evaluation, averaging."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, EmptyAggregateError


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Flat parameter vector: the d x k weight matrix row-major, then k biases."""

    values: np.ndarray
    d: int
    k: int

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)  # private copy
        if v.ndim != 1 or v.size != self.d * self.k + self.k:
            raise DimensionError(f"expected {self.d * self.k + self.k} values for d={self.d}, "
                                 f"k={self.k}, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ConfigError("model parameters must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def weights(self) -> np.ndarray:
        return self.values[: self.d * self.k].reshape(self.d, self.k)

    @property
    def bias(self) -> np.ndarray:
        return self.values[self.d * self.k:]

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.d == other.d and self.k == other.k and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class TrainSpec:
    learning_rate: float
    local_iterations: int = 5
    batch_size: int = 20

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.local_iterations < 0 or self.batch_size < 1:
            raise ConfigError("local_iterations must be >= 0 and batch_size >= 1")


def init_params(d: int, k: int, seed: int, scale: float = 0.0) -> ModelParams:
    if scale < 0:
        raise ConfigError(f"init scale must be >= 0, got {scale}")
    rng = np.random.default_rng(seed)
    vals = rng.uniform(-scale, scale, size=d * k + k) if scale > 0 else np.zeros(d * k + k)
    return ModelParams(vals, d, k)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_batch(p: ModelParams, x: np.ndarray, y: np.ndarray) -> None:
    if x.ndim != 2 or x.shape[0] == 0:
        raise DimensionError(f"batch must be a non-empty 2-D array, got shape {x.shape}")
    if x.shape[1] != p.d:
        raise DimensionError(f"batch has {x.shape[1]} features, model expects {p.d}")
    if y.shape != (x.shape[0],):
        raise DimensionError(f"labels shape {y.shape} does not match {x.shape[0]} rows")
    if y.min() < 0 or y.max() >= p.k:
        raise DimensionError(f"labels must lie in [0, {p.k})")


def loss_and_grad(p: ModelParams, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its gradient w.r.t. ``p.values``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_batch(p, x, y)
    m = x.shape[0]
    logp = _log_softmax(x @ p.weights + p.bias)
    rows = np.arange(m)
    loss = -logp[rows, y].mean()
    delta = np.exp(logp)
    delta[rows, y] -= 1.0
    delta /= m
    grad = np.concatenate([(x.T @ delta).ravel(), delta.sum(axis=0)])
    return float(loss), grad


def _batch_positions(size: int, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    # Full batch (in shard order, no draw) when the shard fits in one batch.
    if size <= batch_size:
        return np.arange(size)
    return rng.choice(size, size=batch_size, replace=False)


def local_train(p: ModelParams, x: np.ndarray, y: np.ndarray, spec: TrainSpec, seed) -> ModelParams:
    """Run ``spec.local_iterations`` minibatch SGD steps on one client's data.

    Each step draws a fresh batch without replacement from ``seed`` (an int,
    SeedSequence or Generator).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_batch(p, x, y)
    rng = np.random.default_rng(seed)
    vals = p.values.copy()
    for _ in range(spec.local_iterations):
        pos = _batch_positions(x.shape[0], spec.batch_size, rng)
        _, g = loss_and_grad(ModelParams(vals, p.d, p.k), x[pos], y[pos])
        vals -= spec.learning_rate * g
    return ModelParams(vals, p.d, p.k)


def local_train_many(start: np.ndarray, d: int, k: int, x: np.ndarray, y: np.ndarray,
                     shards: Sequence[np.ndarray], spec: TrainSpec,
                     rngs: Sequence[np.random.Generator]) -> np.ndarray:
    """Vectorised :func:`local_train` for many clients at once.

    ``start`` is an (m, d*k+k) array of starting vectors, ``shards[i]`` the
    row indices of client i into ``x``/``y`` and ``rngs[i]`` its generator.
    Batches are drawn exactly as :func:`local_train` draws them, so row i of
    the result matches ``local_train`` on client i up to float rounding.
    """
    m = len(shards)
    start = np.asarray(start, dtype=np.float64)
    if start.shape != (m, d * k + k):
        raise DimensionError(f"start must have shape {(m, d * k + k)}, got {start.shape}")
    if m == 0:
        return start.copy()
    w = start[:, : d * k].reshape(m, d, k).copy()
    b = start[:, d * k:].copy()
    sizes = [len(s) for s in shards]
    width = min(spec.batch_size, max(sizes))
    lr = spec.learning_rate
    ar_m = np.arange(m)[:, None]
    for _ in range(spec.local_iterations):
        rows = np.zeros((m, width), dtype=np.int64)
        scale = np.zeros((m, width))
        for i, (shard, rng) in enumerate(zip(shards, rngs)):
            pos = _batch_positions(sizes[i], spec.batch_size, rng)
            rows[i, : pos.size] = shard[pos]
            scale[i, : pos.size] = 1.0 / pos.size
        xb = x[rows]
        delta = np.exp(_log_softmax(xb @ w + b[:, None, :]))
        delta[ar_m, np.arange(width)[None, :], y[rows]] -= 1.0
        delta *= scale[:, :, None]
        w -= lr * (xb.transpose(0, 2, 1) @ delta)
        b -= lr * delta.sum(axis=1)
    return np.concatenate([w.reshape(m, d * k), b], axis=1)


def evaluate(p: ModelParams, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Mean cross-entropy and argmax accuracy (ties go to the lowest class index)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_batch(p, x, y)
    logp = _log_softmax(x @ p.weights + p.bias)
    loss = -logp[np.arange(x.shape[0]), y].mean()
    acc = np.mean(np.argmax(logp, axis=1) == y)
    return float(loss), float(acc)


def weighted_average(models: Sequence[ModelParams], weights: Sequence[float]) -> ModelParams:
    """Element-wise ``sum(w_i * m_i) / sum(w_i)``, accumulated in list order."""
    if len(models) == 0 or len(models) != len(weights):
        raise EmptyAggregateError(f"need equally many models and weights, got "
                                  f"{len(models)} and {len(weights)}")
    if any(w < 0 for w in weights):
        raise ConfigError("aggregation weights must be >= 0")
    d, k = models[0].d, models[0].k
    acc = np.zeros_like(models[0].values)
    total = 0.0
    for m, w in zip(models, weights):
        if (m.d, m.k) != (d, k):
            raise DimensionError("cannot average models of different shapes")
        if w == 0:
            continue
        acc += w * m.values
        total += w
    if total == 0:
        raise EmptyAggregateError("all aggregation weights are zero")
    return ModelParams(acc / total, d, k)
