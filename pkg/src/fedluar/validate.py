"""Fast self-checks behind ``fedluar validate``.

Each check recomputes a quantity two independent ways (or against a hand
value) and reports pass/fail; nothing here depends on pytest.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .accounting import comm_cost_from_sets, memory_footprint_model
from .config import ExperimentConfig
from .luar_core import sample_recycle_set, selection_probabilities
from .nn_core import LayerKeyedVector, Network, mlp_specs
from .orchestrator import run_experiment


def _fd_grad(net, params, x, y, h=1e-5):
    grad = LayerKeyedVector.zeros_like(params)
    for l in params.layer_ids:
        buf = params[l]
        for i in range(buf.size):
            orig = buf[i]
            buf[i] = orig + h
            lp, _ = net.loss_and_grad(params, x, y)
            buf[i] = orig - h
            lm, _ = net.loss_and_grad(params, x, y)
            buf[i] = orig
            grad[l][i] = (lp - lm) / (2 * h)
    return grad


def check_gradients() -> tuple[bool, str]:
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        net = Network(mlp_specs([5, 7, 6, 3]))
        params = net.init_params(rng)
        x, y = rng.normal(size=(8, 5)), rng.integers(0, 3, size=8)
        _, g = net.loss_and_grad(params, x, y)
        fd = _fd_grad(net, params, x, y)
        for l in params.layer_ids:
            denom = max(np.linalg.norm(g[l]), np.linalg.norm(fd[l]), 1e-12)
            worst = max(worst, float(np.linalg.norm(g[l] - fd[l]) / denom))
    return worst < 1e-4, f"max relative error {worst:.2e}"


def check_probabilities() -> tuple[bool, str]:
    p = selection_probabilities([1.0, 2.0, 4.0])
    err = float(np.max(np.abs(p - np.array([4, 2, 1]) / 7)))
    rng = np.random.default_rng(0)
    n = 20_000
    counts = np.zeros(3)
    for _ in range(n):
        for i in sample_recycle_set(p, 1, "luar", rng):
            counts[i] += 1
    z = np.abs(counts - n * p) / np.sqrt(n * p * (1 - p))
    return err <= 1e-12 and bool(np.all(z <= 3)), f"|p - exact| = {err:.1e}, max z = {z.max():.2f}"


def check_accounting() -> tuple[bool, str]:
    cost = comm_cost_from_sets([10, 10, 10, 10], [{3}] * 8)
    mem = memory_footprint_model(32, [40, 60], {0})
    return cost == 0.75 and mem == (3200, 1960), f"cost={float(cost)}, memory={mem}"


def _tiny() -> ExperimentConfig:
    return ExperimentConfig(n_samples=300, n_features=6, n_classes=3, hidden_sizes=[8, 8],
                            n_clients=6, active_clients=3, rounds=8, local_steps=3,
                            batch_size=8, alpha=0.5, eval_every=4)


def check_delta_zero_reduction() -> tuple[bool, str]:
    a = run_experiment(_tiny().replace(scheme="none"))
    b = run_experiment(_tiny().replace(scheme="luar", delta=0))
    return a.final_params.equal(b.final_params), "FedAvg vs delta=0 final parameters"


def check_recycling_identity() -> tuple[bool, str]:
    from .accounting import CommLedger
    from .orchestrator import build_federation, new_state, run_round
    cfg = _tiny().replace(delta=1, rounds=10)
    fed = build_federation(cfg)
    state, ledger, params = new_state(fed), CommLedger(fed.layer_sizes), fed.init_params
    prev = None
    ok = True
    for t in range(cfg.rounds):
        params, state, rec = run_round(t, params, state, fed, ledger)
        for l in rec.recycled_set:
            ok &= state.last_applied[l].tobytes() == prev[l].tobytes()
        prev = state.last_applied
    return ok, "recycled layers reuse last round's bytes"


def check_determinism() -> tuple[bool, str]:
    from .io import records_to_csv
    cfg = _tiny().replace(delta=1)
    a = records_to_csv(run_experiment(cfg).records)
    b = records_to_csv(run_experiment(cfg).records)
    return a == b, "two runs, byte-identical CSV"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "gradient-oracle": check_gradients,
    "selection-probabilities": check_probabilities,
    "accounting-and-memory": check_accounting,
    "delta-zero-reduction": check_delta_zero_reduction,
    "recycling-identity": check_recycling_identity,
    "determinism": check_determinism,
}


def run_checks(echo=print) -> bool:
    all_ok = True
    for name, fn in CHECKS.items():
        ok, detail = fn()
        all_ok &= ok
        echo(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
