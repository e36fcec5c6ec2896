"""Layer-wise update aggregation with recycling.

The server keeps the update it applied last round.  Each round it scores
every layer by ``||applied update|| / ||weights||``, turns the inverse
scores into sampling weights and draws ``delta`` layers whose clients will
not upload; for those layers the previous applied update is reused.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .client_trainer import LocalUpdate
from .errors import ConfigurationError, FedLuarError, ProtocolError
from .nn_core import LayerKeyedVector, layer_norms

EPS = 1e-12

SCHEMES = ("luar", "uniform_random", "top_input_side", "bottom_output_side",
           "gradient_norm", "deterministic_luar", "none")


@dataclass
class RecyclerState:
    layer_sizes: list[int]
    delta: int
    last_applied: LayerKeyedVector | None = None
    scores: np.ndarray | None = None
    staleness: np.ndarray = None
    current_set: frozenset[int] = frozenset()

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes)

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        if not 0 <= self.delta <= self.n_layers:
            raise ConfigurationError(f"delta={self.delta} must lie in [0, {self.n_layers}]")
        if self.staleness is None:
            self.staleness = np.zeros(self.n_layers, dtype=np.int64)


def compute_scores(applied_update: LayerKeyedVector, global_params: LayerKeyedVector,
                   eps: float = EPS) -> np.ndarray:
    """Gradient-to-weight ratio per layer: ||update_l|| / max(||x_l||, eps)."""
    if not applied_update.same_structure(global_params):
        raise FedLuarError("update and parameters have different layer structure")
    return layer_norms(applied_update) / np.maximum(layer_norms(global_params), eps)


def selection_probabilities(scores: Sequence[float], eps: float = EPS) -> np.ndarray:
    """Normalized inverse scores; low-score layers are the likeliest to be recycled."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise FedLuarError("no layers to score")
    if np.any(s < 0):
        raise FedLuarError("scores must be non-negative")
    w = 1.0 / np.maximum(s, eps)
    return w / w.sum()


def weighted_sample_without_replacement(weights: Sequence[float], k: int,
                                        rng: np.random.Generator) -> list[int]:
    """Draw ``k`` distinct indices one at a time, renormalizing after each draw."""
    w = np.array(weights, dtype=np.float64)
    alive = np.ones(w.size, dtype=bool)
    picked = []
    for _ in range(k):
        cand = np.flatnonzero(alive)
        cum = np.cumsum(w[cand])
        u = rng.random() * cum[-1]
        j = int(np.searchsorted(cum, u, side="right"))
        j = min(j, cand.size - 1)
        picked.append(int(cand[j]))
        alive[cand[j]] = False
    return picked


def sample_recycle_set(p: Sequence[float], delta: int, scheme: str,
                       rng: np.random.Generator | int) -> frozenset[int]:
    """Choose the layers to recycle next round.

    ``p`` carries the scheme's sampling weights: inverse scores for ``luar``
    and ``deterministic_luar``, inverse update norms for ``gradient_norm``.
    Other schemes ignore it apart from its length.
    """
    p = np.asarray(p, dtype=np.float64)
    n = p.size
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown selection scheme {scheme!r}")
    if not 0 <= delta <= n:
        raise ConfigurationError(f"delta={delta} must lie in [0, {n}]")
    if scheme == "none" or delta == 0:
        return frozenset()
    if delta == n:
        return frozenset(range(n))
    if scheme == "top_input_side":
        return frozenset(range(delta))
    if scheme == "bottom_output_side":
        return frozenset(range(n - delta, n))
    if scheme == "deterministic_luar":
        # largest p == smallest score; stable sort keeps the lower id on ties
        return frozenset(int(i) for i in np.argsort(-p, kind="stable")[:delta])
    rng = np.random.default_rng(rng)
    weights = np.ones(n) if scheme == "uniform_random" else p
    return frozenset(weighted_sample_without_replacement(weights, delta, rng))


def scheme_weights(scheme: str, applied: LayerKeyedVector, scores: np.ndarray,
                   eps: float = EPS) -> np.ndarray:
    if scheme == "gradient_norm":
        return selection_probabilities(layer_norms(applied), eps)
    return selection_probabilities(scores, eps)


def _check_updates(client_updates: Sequence[LocalUpdate], state: RecyclerState) -> list[int]:
    if not client_updates:
        raise ProtocolError("no client updates to aggregate")
    expected = [l for l in range(state.n_layers) if l not in state.current_set]
    for u in client_updates:
        if u.update.layer_ids != expected:
            raise ProtocolError(
                f"client {u.client_id} sent layers {u.update.layer_ids}, expected {expected}")
        for l in expected:
            if u.update[l].shape != (state.layer_sizes[l],):
                raise ProtocolError(f"client {u.client_id}: layer {l} has wrong length")
    return expected


def _mean_update(client_updates: Sequence[LocalUpdate], layers: list[int]) -> dict[int, np.ndarray]:
    ordered = sorted(client_updates, key=lambda u: u.client_id)
    a = len(ordered)
    out = {}
    for l in layers:
        acc = ordered[0].update[l].copy()
        for u in ordered[1:]:
            acc += u.update[l]
        out[l] = acc / a
    return out


def _advance(state: RecyclerState, applied: LayerKeyedVector) -> None:
    for l in range(state.n_layers):
        state.staleness[l] = state.staleness[l] + 1 if l in state.current_set else 0
    state.last_applied = applied


def compose_global_update(client_updates: Sequence[LocalUpdate],
                          state: RecyclerState) -> tuple[LayerKeyedVector, frozenset[int]]:
    """Fresh client mean on uploaded layers, last round's update on recycled ones.

    Mutates ``state``: staleness counters and ``last_applied``.  Returns the
    applied update and the set of layers whose value was recycled.
    """
    fresh_layers = _check_updates(client_updates, state)
    if state.current_set and state.last_applied is None:
        raise ProtocolError("recycling requested before any update was applied")
    means = _mean_update(client_updates, fresh_layers)
    applied = LayerKeyedVector()
    for l in range(state.n_layers):
        applied[l] = state.last_applied[l].copy() if l in state.current_set else means[l]
    _advance(state, applied)
    return applied, state.current_set


def compose_dropping_update(client_updates: Sequence[LocalUpdate],
                            state: RecyclerState) -> LayerKeyedVector:
    """Ablation: like :func:`compose_global_update` but recycled layers get a zero update."""
    fresh_layers = _check_updates(client_updates, state)
    means = _mean_update(client_updates, fresh_layers)
    applied = LayerKeyedVector()
    for l in range(state.n_layers):
        applied[l] = np.zeros(state.layer_sizes[l]) if l in state.current_set else means[l]
    _advance(state, applied)
    return applied


def measure_noise(applied: LayerKeyedVector, fresh_full_update: LayerKeyedVector,
                  recycled: frozenset[int] | set[int]) -> tuple[float, float]:
    """Squared norm of ``applied - fresh`` and the recycled share of fresh energy."""
    n_sq = 0.0
    rec_energy = 0.0
    total_energy = 0.0
    for l in fresh_full_update.layer_ids:
        diff = applied[l] - fresh_full_update[l]
        n_sq += float(np.dot(diff, diff))
        e = float(np.dot(fresh_full_update[l], fresh_full_update[l]))
        total_energy += e
        if l in recycled:
            rec_energy += e
    kappa = rec_energy / total_energy if total_energy > 0 else 0.0
    return n_sq, kappa


def refresh_scores(state: RecyclerState, applied: LayerKeyedVector,
                   round_params: LayerKeyedVector, mode: str = "applied") -> np.ndarray:
    """Update ``state.scores`` after a round.

    ``applied`` recomputes every layer from the applied update.  ``frozen``
    keeps the previous score for layers that were recycled this round.
    """
    new = compute_scores(applied, round_params)
    if mode == "frozen" and state.scores is not None:
        for l in state.current_set:
            new[l] = state.scores[l]
    elif mode not in ("applied", "frozen"):
        raise ConfigurationError(f"unknown score_refresh {mode!r}")
    state.scores = new
    return new
