"""Which layers to recycle: comparing selection schemes at equal delta.

    python demos/03_selection_schemes.py --rounds 150
"""

from fedluar import run_experiment

from _common import parse

SCHEMES = ["luar", "deterministic_luar", "uniform_random", "gradient_norm",
           "top_input_side", "bottom_output_side"]

args, cfg = parse(__doc__.splitlines()[0], rounds=150)
delta = cfg.delta or 2
print(f"{cfg.rounds} rounds, delta={delta}, seed {cfg.master_seed}\n")
print(f"{'scheme':<20} {'final acc':>9} {'cost':>7}  times each layer was aggregated")
for scheme in SCHEMES:
    res = run_experiment(cfg.replace(scheme=scheme, delta=delta))
    print(f"{scheme:<20} {res.final_accuracy:9.4f} {res.normalized_cost:7.4f}  "
          f"{res.ledger.per_layer_counts}")
