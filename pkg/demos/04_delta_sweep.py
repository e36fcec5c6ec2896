"""Trading accuracy for upload volume by recycling more layers.

    python demos/04_delta_sweep.py --rounds 150
"""

from fedluar import run_experiment

from _common import parse

args, cfg = parse(__doc__.splitlines()[0], rounds=150)
print(f"{'delta':>5} {'final acc':>9} {'upload cost':>11} {'MB uploaded':>11}")
for delta in range(0, cfg.n_layers):
    res = run_experiment(cfg.replace(delta=delta))
    print(f"{delta:>5} {res.final_accuracy:9.4f} {res.normalized_cost:11.4f} "
          f"{res.ledger.upload_bytes / 1e6:11.2f}")
