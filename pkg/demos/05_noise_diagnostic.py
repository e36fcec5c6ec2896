"""How far does the applied update drift from the fresh full mean?

Diagnostic mode has every client also report its full update, so the server
can measure ||applied - fresh||^2 (n_norm_sq) and the share of fresh update
energy sitting in recycled layers (kappa_hat).  A steady, non-growing
n_norm_sq means the recycling error does not accumulate.

    python demos/05_noise_diagnostic.py --rounds 150
"""

import numpy as np

from fedluar import run_experiment

from _common import parse

args, cfg = parse(__doc__.splitlines()[0], rounds=150)
res = run_experiment(cfg.replace(delta=cfg.delta or 2, diagnostic=True))
n = np.array([r.n_norm_sq for r in res.records])
kappa = np.array([r.kappa_hat for r in res.records])

width = max(1, cfg.rounds // 10)
print(f"{'rounds':>11} {'mean n_norm_sq':>15} {'mean kappa_hat':>15}")
for lo in range(0, cfg.rounds, width):
    hi = min(lo + width, cfg.rounds)
    print(f"{lo:>5}-{hi - 1:<5} {n[lo:hi].mean():15.4e} {kappa[lo:hi].mean():15.4f}")
