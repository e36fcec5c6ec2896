"""Synthetic classification data and label-based Dirichlet client partitioning."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, GenerationError


@dataclass
class Dataset:
    features: np.ndarray  # (N, F) float64
    labels: np.ndarray    # (N,) int64
    n_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ConfigurationError("features must be (N, F) with N labels")
        if self.n_classes <= 0 or self.features.shape[0] == 0 or self.features.shape[1] == 0:
            raise ConfigurationError("N, F and K must all be positive")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ConfigurationError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> Dataset:
        return Dataset(self.features[idx], self.labels[idx], self.n_classes)


@dataclass(frozen=True)
class ClientShard:
    client_id: int
    sample_indices: np.ndarray

    def __len__(self) -> int:
        return len(self.sample_indices)


def generate_synthetic(seed: int, n: int, f: int, k: int,
                       class_separation: float) -> Dataset:
    """K isotropic unit-variance Gaussian clusters.

    Class means are random unit directions scaled by ``class_separation``,
    so neighbouring means sit roughly ``sqrt(2) * class_separation`` cluster
    std apart.  Labels are balanced within one sample.
    """
    if min(n, f, k) <= 0:
        raise ConfigurationError("N, F and K must all be positive")
    if n < k:
        raise ConfigurationError(f"need N >= K, got N={n}, K={k}")
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((k, f))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = class_separation * directions
    labels = rng.permutation(np.arange(n) % k)
    features = means[labels] + rng.standard_normal((n, f))
    return Dataset(features, labels, k)


def train_test_split(data: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0.0 < test_fraction < 1.0:
        raise ConfigurationError("test_fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(len(data))
    n_test = int(round(test_fraction * len(data)))
    return data.subset(np.sort(perm[n_test:])), data.subset(np.sort(perm[:n_test]))


def _largest_remainder(total: int, proportions: np.ndarray) -> np.ndarray:
    raw = proportions * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        # ties go to the lower client id
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def dirichlet_partition(data: Dataset, m: int, alpha: float, seed: int,
                        max_redraws: int = 100) -> list[ClientShard]:
    """Split every class across ``m`` clients with Dirichlet(alpha) proportions.

    The whole partition is re-drawn until no shard is empty; after
    ``max_redraws`` failed attempts a :class:`GenerationError` is raised.
    """
    if m < 1:
        raise ConfigurationError("need at least one client")
    if alpha <= 0:
        raise ConfigurationError("alpha must be positive")
    if m > len(data):
        raise GenerationError(f"cannot give {m} clients a sample each from {len(data)} samples")
    rng = np.random.default_rng(seed)
    class_idx = [np.flatnonzero(data.labels == c) for c in range(data.n_classes)]
    for _ in range(max_redraws):
        buckets: list[list[np.ndarray]] = [[] for _ in range(m)]
        for idx in class_idx:
            if idx.size == 0:
                continue
            props = rng.dirichlet(np.full(m, alpha))
            counts = _largest_remainder(idx.size, props)
            shuffled = rng.permutation(idx)
            bounds = np.concatenate([[0], np.cumsum(counts)])
            for c in range(m):
                buckets[c].append(shuffled[bounds[c]:bounds[c + 1]])
        shards = [np.sort(np.concatenate(b)) for b in buckets]
        if all(s.size > 0 for s in shards):
            return [ClientShard(c, s) for c, s in enumerate(shards)]
    raise GenerationError(
        f"no partition with {m} non-empty shards after {max_redraws} draws (alpha={alpha})")


def label_entropy(data: Dataset, shard: ClientShard) -> float:
    """Shannon entropy (nats) of a shard's label histogram."""
    counts = np.bincount(data.labels[shard.sample_indices], minlength=data.n_classes)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def load_csv_dataset(path: str | Path) -> Dataset:
    """Read a ``label,f0,f1,...`` CSV file."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"{path}: empty dataset file") from None
        expected = ["label"] + [f"f{i}" for i in range(len(header) - 1)]
        if [h.strip() for h in header] != expected or len(header) < 2:
            raise ConfigurationError(f"{path}: header must be label,f0,f1,...")
        labels, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ConfigurationError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                labels.append(int(row[0]))
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ConfigurationError(f"{path}: no samples")
    labels = np.array(labels, dtype=np.int64)
    return Dataset(np.array(rows), labels, int(labels.max()) + 1)


def save_csv_dataset(data: Dataset, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i}" for i in range(data.n_features)])
        for y, row in zip(data.labels, data.features):
            writer.writerow([int(y)] + [repr(float(v)) for v in row])
