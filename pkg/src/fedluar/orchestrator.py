"""Server round loop: client sampling, local training, LUAR composition, evaluation."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .accounting import CommLedger
from .client_trainer import LocalUpdate, local_loss_eval, local_train, lr_at_round
from .config import ExperimentConfig
from .data_gen import (ClientShard, Dataset, dirichlet_partition, generate_synthetic,
                       load_csv_dataset, train_test_split)
from .errors import ConfigurationError
from .luar_core import (RecyclerState, compose_dropping_update, compose_global_update,
                        measure_noise, refresh_scores, sample_recycle_set, scheme_weights)
from .nn_core import LayerKeyedVector, Network

# stream tags mixed into every seed so that draws for different purposes never collide
_DATA, _SPLIT, _PARTITION, _INIT, _ACTIVE, _CLIENT, _SELECT = range(7)


def stream(master_seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, *key])


@dataclass
class RoundRecord:
    round: int
    active_client_ids: list[int]
    eval_loss: float | None
    eval_accuracy: float | None
    uploaded_params: int
    normalized_cost_cum: float
    per_layer_upload_count: list[int]
    recycled_set: list[int]
    n_norm_sq: float | None = None
    kappa_hat: float | None = None
    wall_ms: float | None = None
    scores: list[float] = field(default_factory=list)
    staleness: list[int] = field(default_factory=list)


@dataclass
class Federation:
    """Everything fixed for the duration of a run."""

    config: ExperimentConfig
    network: Network
    train: Dataset
    test: Dataset
    shards: list[ClientShard]
    init_params: LayerKeyedVector

    @property
    def layer_sizes(self) -> list[int]:
        return self.network.layer_sizes


def build_federation(config: ExperimentConfig) -> Federation:
    seed = config.master_seed
    if config.data_path:
        if not Path(config.data_path).is_file():
            raise ConfigurationError(f"data_path: file not found: {config.data_path}")
        data = load_csv_dataset(config.data_path)
    else:
        data = generate_synthetic(stream(seed, _DATA), config.n_samples, config.n_features,
                                  config.n_classes, config.class_separation)
    train, test = train_test_split(data, config.test_fraction, stream(seed, _SPLIT))
    shards = dirichlet_partition(train, config.n_clients, config.alpha, stream(seed, _PARTITION))
    network = config.network(data.n_features, data.n_classes)
    params = network.init_params(np.random.default_rng(stream(seed, _INIT)))
    return Federation(config, network, train, test, shards, params)


def active_clients(master_seed: int, t: int, m: int, a: int) -> list[int]:
    """Uniform draw of ``a`` of ``m`` clients; a pure function of (seed, t)."""
    if a > m:
        raise ConfigurationError(f"cannot activate {a} of {m} clients")
    rng = np.random.default_rng(stream(master_seed, _ACTIVE, t))
    return sorted(int(i) for i in rng.choice(m, size=a, replace=False))


def new_state(fed: Federation) -> RecyclerState:
    return RecyclerState(fed.layer_sizes, fed.config.delta)


def _train_clients(fed: Federation, t: int, params: LayerKeyedVector, ids: Sequence[int],
                   recycled: frozenset[int], keep_full: bool) -> list[LocalUpdate]:
    cfg = fed.config
    rule = cfg.local_rule()
    lr = lr_at_round(cfg.learning_rate, t, cfg.rounds, cfg.lr_decay_fractions)

    def work(cid: int) -> LocalUpdate:
        return local_train(fed.network, params, fed.train, fed.shards[cid], rule,
                           cfg.local_steps, cfg.batch_size, recycled,
                           stream(cfg.master_seed, _CLIENT, t, cid),
                           learning_rate=lr, keep_full=keep_full)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            updates = list(pool.map(work, ids))
    else:
        updates = [work(cid) for cid in ids]
    return sorted(updates, key=lambda u: u.client_id)


def _full_mean(updates: Sequence[LocalUpdate]) -> LayerKeyedVector:
    out = LayerKeyedVector()
    for l in updates[0].full_update.layer_ids:
        acc = updates[0].full_update[l].copy()
        for u in updates[1:]:
            acc += u.full_update[l]
        out[l] = acc / len(updates)
    return out


def _evaluate_now(cfg: ExperimentConfig, t: int) -> bool:
    return (t + 1) % cfg.eval_every == 0 or t == cfg.rounds - 1


def run_round(t: int, params: LayerKeyedVector, state: RecyclerState, fed: Federation,
              ledger: CommLedger, *, diagnostic: bool | None = None
              ) -> tuple[LayerKeyedVector, RecyclerState, RoundRecord]:
    """One FedLUAR round.  ``state`` and ``ledger`` are updated in place."""
    cfg = fed.config
    diagnostic = cfg.diagnostic if diagnostic is None else diagnostic
    start = time.perf_counter()
    ids = active_clients(cfg.master_seed, t, cfg.n_clients, cfg.active_clients)
    recycled = state.current_set
    updates = _train_clients(fed, t, params, ids, recycled, keep_full=diagnostic)

    if cfg.aggregation == "drop":
        applied = compose_dropping_update(updates, state)
    else:
        applied, _ = compose_global_update(updates, state)

    n_sq = kappa = None
    if diagnostic:
        n_sq, kappa = measure_noise(applied, _full_mean(updates), recycled)

    new_params = params + applied
    scores = refresh_scores(state, applied, params, cfg.score_refresh)
    if cfg.scheme == "none" or cfg.delta == 0:
        state.current_set = frozenset()
    else:
        weights = scheme_weights(cfg.scheme, applied, scores)
        state.current_set = sample_recycle_set(
            weights, cfg.delta, cfg.scheme, np.random.default_rng(stream(cfg.master_seed, _SELECT, t)))

    uploaded = ledger.record_round(len(ids), recycled)
    cost_cum = float(sum(ledger.uploads)) / ledger.fedavg_total()

    loss = acc = None
    if _evaluate_now(cfg, t):
        loss, acc = local_loss_eval(fed.network, new_params, fed.test, cfg.eval_limit or None)
    wall = (time.perf_counter() - start) * 1e3 if cfg.record_timing else None
    record = RoundRecord(
        round=t, active_client_ids=ids, eval_loss=loss, eval_accuracy=acc,
        uploaded_params=uploaded, normalized_cost_cum=cost_cum,
        per_layer_upload_count=list(ledger.per_layer_counts), recycled_set=sorted(recycled),
        n_norm_sq=n_sq, kappa_hat=kappa, wall_ms=wall,
        scores=[float(s) for s in scores], staleness=[int(k) for k in state.staleness])
    return new_params, state, record


def run_diagnostic_round(t: int, params: LayerKeyedVector, state: RecyclerState,
                         fed: Federation, ledger: CommLedger):
    """:func:`run_round` plus the out-of-band full mean update and noise measurement."""
    return run_round(t, params, state, fed, ledger, diagnostic=True)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RoundRecord]
    final_params: LayerKeyedVector
    ledger: CommLedger
    federation: Federation
    wall_seconds: float = 0.0

    @property
    def final_accuracy(self) -> float | None:
        for r in reversed(self.records):
            if r.eval_accuracy is not None:
                return r.eval_accuracy
        return None

    @property
    def final_loss(self) -> float | None:
        for r in reversed(self.records):
            if r.eval_loss is not None:
                return r.eval_loss
        return None

    @property
    def normalized_cost(self) -> float | None:
        return self.ledger.normalized_cost if self.ledger.rounds else None


def run_experiment(config: ExperimentConfig, out_dir=None,
                   federation: Federation | None = None) -> ExperimentResult:
    """Run ``config.rounds`` rounds; optionally write CSV + manifest into ``out_dir``."""
    fed = federation if federation is not None else build_federation(config)
    if fed.config is not config:
        fed = Federation(config, fed.network, fed.train, fed.test, fed.shards, fed.init_params)
    start = time.perf_counter()
    params = fed.init_params.copy()
    state = new_state(fed)
    ledger = CommLedger(fed.layer_sizes)
    records = []
    for t in range(config.rounds):
        params, state, rec = run_round(t, params, state, fed, ledger)
        records.append(rec)
    result = ExperimentResult(config, records, params, ledger, fed,
                              wall_seconds=time.perf_counter() - start)
    if out_dir is not None:
        from .io import serialize_records
        serialize_records(records, out_dir, result=result)
    return result
