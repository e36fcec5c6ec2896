"""Server-side buffer size: FedAvg keeps a*d scalars, recycling a*(d-k)+k.

No training here; just the accounting for a few model shapes.

    python demos/06_memory_model.py
"""

from fedluar import ExperimentConfig
from fedluar.accounting import memory_footprint_model

print(f"{'model':<28} {'a':>3} {'k/d':>6} {'fedavg':>10} {'recycle':>10} {'saving':>7}")
fedavg, luar = memory_footprint_model(32, [40, 60], {0})
print(f"{'toy (d=100, k=40)':<28} {32:>3} {0.4:6.2f} {fedavg:>10} {luar:>10} "
      f"{1 - luar / fedavg:6.1%}")

cfg = ExperimentConfig()
sizes = cfg.network().layer_sizes
for a in (8, 32):
    for recycled in ({0}, {0, 1}, {3, 4}):
        fedavg, luar = memory_footprint_model(a, sizes, recycled)
        k = sum(sizes[l] for l in recycled)
        label = f"desk MLP, recycle {sorted(recycled)}"
        print(f"{label:<28} {a:>3} {k / sum(sizes):6.2f} {fedavg:>10} {luar:>10} "
              f"{1 - luar / fedavg:6.1%}")
