"""Simulated FL client: tau local steps of SGD with momentum."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .data_gen import ClientShard, Dataset
from .errors import ConfigurationError
from .nn_core import LayerKeyedVector, Network, softmax_cross_entropy

RULE_KINDS = ("sgd_momentum", "sgd_momentum_proximal")


@dataclass(frozen=True)
class LocalUpdateRule:
    kind: str = "sgd_momentum"
    learning_rate: float = 0.05
    momentum: float = 0.9
    proximal_mu: float = 0.0

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ConfigurationError(f"unknown local rule {self.kind!r}")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.proximal_mu < 0:
            raise ConfigurationError("proximal_mu must be >= 0")


@dataclass
class LocalUpdate:
    client_id: int
    update: LayerKeyedVector  # only layers outside the recycling set
    steps_taken: int
    full_update: LayerKeyedVector | None = None  # diagnostic only, never uploaded


def local_train(network: Network, global_params: LayerKeyedVector, data: Dataset,
                shard: ClientShard, rule: LocalUpdateRule, tau: int, batch_size: int,
                recycled: Iterable[int], seed, *, learning_rate: float | None = None,
                keep_full: bool = False) -> LocalUpdate:
    """Run ``tau`` local steps from ``global_params`` and return x_tau - x_0.

    The whole trajectory is computed on every layer; layers in ``recycled``
    are only removed from what the client uploads.  Momentum starts at zero
    every call.  Mini-batches are drawn with replacement from the shard, and
    ``batch_size`` is clamped to the shard size.  ``learning_rate``
    overrides ``rule.learning_rate`` (used by the round-level decay schedule).
    """
    if tau < 1:
        raise ConfigurationError("tau must be >= 1")
    if len(shard) == 0:
        raise ConfigurationError(f"client {shard.client_id} has an empty shard")
    recycled = set(recycled)
    if not recycled <= set(range(network.n_layers)):
        raise ConfigurationError(f"recycled layers {sorted(recycled)} out of range")
    lr = rule.learning_rate if learning_rate is None else learning_rate
    beta = rule.momentum
    mu = rule.proximal_mu if rule.kind == "sgd_momentum_proximal" else 0.0
    bs = min(batch_size, len(shard))
    rng = np.random.default_rng(seed)

    x0 = global_params
    x = global_params.copy()
    velocity = {l: np.zeros_like(b) for l, b in x.entries.items()}
    for _ in range(tau):
        pick = shard.sample_indices[rng.integers(0, len(shard), size=bs)]
        _, grad = network.loss_and_grad(x, data.features[pick], data.labels[pick])
        for l in x.layer_ids:
            g = grad[l]
            if mu != 0.0:
                g = g + mu * (x[l] - x0[l])
            velocity[l] = beta * velocity[l] - lr * g
            x[l] = x[l] + velocity[l]
    full = x - x0
    keep = [l for l in full.layer_ids if l not in recycled]
    return LocalUpdate(shard.client_id, full.restrict(keep), tau,
                       full_update=full if keep_full else None)


def local_loss_eval(network: Network, params: LayerKeyedVector, data: Dataset,
                    batch_limit: int | None = None) -> tuple[float, float]:
    """Mean loss and top-1 accuracy over the first ``batch_limit`` samples."""
    n = len(data) if batch_limit is None else min(batch_limit, len(data))
    logits, _ = network.forward(params, data.features[:n])
    labels = data.labels[:n]
    loss, _ = softmax_cross_entropy(logits, labels)
    acc = float(np.mean(np.argmax(logits, axis=1) == labels))
    return loss, acc


def lr_at_round(base_lr: float, t: int, total_rounds: int,
                decay_fractions: Iterable[float], factor: float = 0.1) -> float:
    """Piecewise-constant schedule: multiply by ``factor`` past each fraction of T."""
    n_decays = sum(1 for f in decay_fractions if t >= f * total_rounds)
    return base_lr * factor ** n_decays
