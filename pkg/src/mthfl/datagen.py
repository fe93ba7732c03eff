"""Synthetic classification data, Dirichlet label-skew partitioning, and the dataset CSV format."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, FormatError, LabelRangeError, PartitionError


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray    # (n,) int64 in [0, k)
    k: int

    def __post_init__(self):
        x = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ConfigError(f"features must be a non-empty n x d matrix, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ConfigError(f"labels shape {y.shape} does not match {x.shape[0]} rows")
        if self.k < 2:
            raise ConfigError(f"need at least 2 classes, got k={self.k}")
        if y.min() < 0 or y.max() >= self.k:
            raise LabelRangeError(f"labels must lie in [0, {self.k})")
        missing = np.setdiff1d(np.arange(self.k), y)
        if missing.size:
            raise ConfigError(f"classes absent from dataset: {missing.tolist()}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.k == other.k and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))

    def subset(self, indices) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(indices)
        return self.features[idx], self.labels[idx]


@dataclass(frozen=True)
class Shard:
    client_id: int
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = self.indices
        if not idx:
            raise PartitionError(f"client {self.client_id}: empty shard")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise PartitionError(f"client {self.client_id}: indices not strictly increasing")

    def __len__(self) -> int:
        return len(self.indices)


def class_directions(d: int, k: int) -> np.ndarray:
    """Unit direction per class: standard basis vectors when k <= d, otherwise fixed random ones."""
    if k <= d:
        return np.eye(d)[:k]
    u = np.random.default_rng(0x5EED).standard_normal((k, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def generate_synthetic(seed: int, n: int, d: int, k: int, class_sep: float) -> Dataset:
    """Gaussian mixture with identity covariance and class means ``class_sep * u_c``."""
    if k < 2 or d < 1:
        raise ConfigError(f"need d >= 1 and k >= 2, got d={d}, k={k}")
    if n < k:
        raise ConfigError(f"n={n} is smaller than the class count k={k}")
    if class_sep < 0:
        raise ConfigError(f"class_sep must be >= 0, got {class_sep}")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % k
    feats = class_sep * class_directions(d, k)[labels] + rng.standard_normal((n, d))
    perm = rng.permutation(n)
    return Dataset(feats[perm], labels[perm], k)


def train_test_split(ds: Dataset, holdout: float, seed: int) -> tuple[Dataset, Optional[Dataset]]:
    """Stratified split; ``holdout`` is the held-out fraction per class (0 disables the split)."""
    if not 0 <= holdout < 1:
        raise ConfigError(f"holdout fraction must be in [0, 1), got {holdout}")
    if holdout == 0:
        return ds, None
    rng = np.random.default_rng(seed)
    test_idx = []
    for c in range(ds.k):
        idx = np.flatnonzero(ds.labels == c)
        take = min(int(round(holdout * idx.size)), idx.size - 1)
        test_idx.append(rng.permutation(idx)[:take])
    test = np.sort(np.concatenate(test_idx))
    mask = np.ones(ds.n, dtype=bool)
    mask[test] = False
    train = Dataset(ds.features[mask], ds.labels[mask], ds.k)
    return train, Dataset(ds.features[test], ds.labels[test], ds.k)


def partition_dirichlet(ds: Dataset, num_clients: int, alpha: float, min_size: int = 5,
                        seed: int = 0, client_ids: Optional[Sequence[int]] = None,
                        max_retries: int = 100, repair: bool = True) -> list[Shard]:
    """Split row indices across clients with per-class Dirichlet(alpha) proportions.

    Each attempt draws, for every class, client proportions from a symmetric
    Dirichlet and cuts that class's shuffled indices at the cumulative
    proportions. Attempts repeat until every shard holds ``min_size`` rows.
    Strong skew over many clients (alpha around 0.1 with hundreds of clients)
    almost never meets the floor on its own, so once retries run out the last
    draw is repaired by moving single random rows from the largest shard to
    the smallest; with ``repair=False`` a PartitionError is raised instead.
    """
    if alpha <= 0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    if num_clients < 1 or min_size < 1 or max_retries < 1:
        raise ConfigError("num_clients, min_size and max_retries must be >= 1")
    if client_ids is None:
        client_ids = range(num_clients)
    client_ids = list(client_ids)
    if len(client_ids) != num_clients:
        raise ConfigError("client_ids length must equal num_clients")
    if num_clients * min_size > ds.n:
        raise PartitionError(f"{num_clients} clients x min_size {min_size} exceeds {ds.n} rows")

    rng = np.random.default_rng(seed)
    by_class = [np.flatnonzero(ds.labels == c) for c in range(ds.k)]
    owner = np.empty(ds.n, dtype=np.int64)
    clients = np.arange(num_clients)
    for _ in range(max_retries):
        for idx in by_class:
            idx = rng.permutation(idx)
            p = rng.dirichlet(np.full(num_clients, alpha))
            cuts = (np.cumsum(p) * idx.size).astype(int)[:-1]
            counts = np.diff(np.concatenate([[0], cuts, [idx.size]]))
            owner[idx] = np.repeat(clients, counts)
        sizes = np.bincount(owner, minlength=num_clients)
        if sizes.min() >= min_size:
            break
    else:
        if not repair:
            raise PartitionError(
                f"could not give every one of {num_clients} clients >= {min_size} rows "
                f"after {max_retries} attempts (alpha={alpha})")
        _rebalance(owner, sizes, min_size, rng)
    order = np.argsort(owner, kind="stable")  # row indices grouped by client, ascending within
    bounds = np.cumsum(np.bincount(owner, minlength=num_clients))[:-1]
    return [Shard(cid, tuple(rows.tolist())) for cid, rows in zip(client_ids, np.split(order, bounds))]


def _rebalance(owner: np.ndarray, sizes: np.ndarray, min_size: int, rng: np.random.Generator) -> None:
    while sizes.min() < min_size:
        lo, hi = int(np.argmin(sizes)), int(np.argmax(sizes))
        rows = np.flatnonzero(owner == hi)
        owner[rows[rng.integers(rows.size)]] = lo
        sizes[lo] += 1
        sizes[hi] -= 1


def label_skew(ds: Dataset, shards: Sequence[Shard]) -> float:
    """Mean over classes of the largest share of that class held by a single client."""
    counts = np.zeros((len(shards), ds.k))
    for i, s in enumerate(shards):
        counts[i] = np.bincount(ds.labels[list(s.indices)], minlength=ds.k)
    totals = counts.sum(axis=0)
    present = totals > 0
    return float((counts.max(axis=0)[present] / totals[present]).mean())


def save_dataset(ds: Dataset, path: str | os.PathLike) -> None:
    lines = [f"d,{ds.d},k,{ds.k}"]
    for row, label in zip(ds.features, ds.labels):
        lines.append(",".join(repr(float(v)) for v in row) + f",{int(label)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_dataset(path: str | os.PathLike) -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty file", line=1)
    head = lines[0].split(",")
    if len(head) != 4 or head[0] != "d" or head[2] != "k":
        raise FormatError("header must be 'd,<d>,k,<k>'", line=1)
    try:
        d, k = int(head[1]), int(head[3])
    except ValueError:
        raise FormatError("header d and k must be integers", line=1) from None
    if d < 1 or k < 2:
        raise FormatError(f"header needs d >= 1 and k >= 2, got d={d}, k={k}", line=1)

    feats = np.empty((len(lines) - 1, d))
    labels = np.empty(len(lines) - 1, dtype=np.int64)
    for i, line in enumerate(lines[1:]):
        lineno = i + 2
        fields = line.split(",")
        if len(fields) != d + 1:
            raise FormatError(f"expected {d + 1} fields, got {len(fields)}", line=lineno)
        try:
            feats[i] = [float(v) for v in fields[:d]]
        except ValueError:
            raise FormatError("feature is not a decimal real", line=lineno) from None
        if not np.all(np.isfinite(feats[i])):
            raise FormatError("feature is not finite", line=lineno)
        try:
            labels[i] = int(fields[d])
        except ValueError:
            raise FormatError("label is not an integer", line=lineno) from None
        if not 0 <= labels[i] < k:
            raise LabelRangeError(f"label {labels[i]} outside [0, {k})", line=lineno)
    if labels.size == 0:
        raise FormatError("no data rows", line=2)
    missing = np.setdiff1d(np.arange(k), labels)
    if missing.size:
        raise FormatError(f"classes absent from file: {missing.tolist()}")
    return Dataset(feats, labels, k)
