"""How large is each layer's update relative to its weights?

Runs plain FedAvg and prints, every few rounds, the per-layer ratio
||update_l|| / ||weights_l||.  Layers whose ratio stays small change little
from round to round; those are the ones worth recycling instead of uploading.

    python demos/01_layer_update_ratios.py --rounds 60
"""

import numpy as np

from fedluar import run_experiment

from _common import parse

args, cfg = parse(__doc__.splitlines()[0], rounds=60)
res = run_experiment(cfg.replace(delta=0))

n_layers = cfg.n_layers
print("round  " + "  ".join(f"layer{l:<4}" for l in range(n_layers)))
step = max(1, cfg.rounds // 12)
for rec in res.records[::step]:
    print(f"{rec.round:>5}  " + "  ".join(f"{s:9.2e}" for s in rec.scores))

mean = np.mean([r.scores for r in res.records], axis=0)
order = np.argsort(mean)
print(f"\nmean ratio per layer: {np.array2string(mean, precision=3)}")
print(f"smallest -> largest: {order.tolist()}  (most likely to be recycled first)")
print(f"final accuracy {res.final_accuracy:.4f}")
