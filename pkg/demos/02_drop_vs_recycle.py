"""Recycling stale layer updates versus simply not updating those layers.

Both variants skip the upload of delta layers per round and so cost the same;
they differ only in what the server applies for the skipped layers: last
round's update (recycle) or nothing (drop).  FedAvg is the full-cost reference.

    python demos/02_drop_vs_recycle.py --rounds 150
"""

from fedluar import run_experiment

from _common import parse

args, cfg = parse(__doc__.splitlines()[0], rounds=150)
delta = cfg.delta or 2
variants = {
    "fedavg": cfg.replace(delta=0),
    "recycle": cfg.replace(delta=delta, aggregation="recycle"),
    "drop": cfg.replace(delta=delta, aggregation="drop"),
}

print(f"{cfg.rounds} rounds, delta={delta} of {cfg.n_layers} layers, seed {cfg.master_seed}\n")
print(f"{'variant':<8} {'final acc':>9} {'upload cost':>11}  per-layer aggregations")
for name, c in variants.items():
    res = run_experiment(c)
    print(f"{name:<8} {res.final_accuracy:9.4f} {res.normalized_cost:11.4f}  "
          f"{res.ledger.per_layer_counts}")
print("\nUnder dropping a skipped layer's score is zero, so it tends to be skipped again "
      "and effectively freezes; recycling keeps every layer moving.")
