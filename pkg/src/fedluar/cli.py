"""Command line entry point: ``fedluar <subcommand> --config FILE``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import Sequence

from .config import ExperimentConfig, load_config
from .errors import ConfigurationError, FedLuarError
from .io import fmt_float

SELECTION_SCHEMES = ["uniform_random", "top_input_side", "bottom_output_side", "gradient_norm",
                     "deterministic_luar", "luar"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fedluar", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, needs_config=True):
        sp.add_argument("--config", required=needs_config, help="flat TOML experiment file")
        sp.add_argument("--seed", type=int, help="override master_seed")
        sp.add_argument("--out", default="runs", help="output directory (default: runs)")
        sp.add_argument("--diagnostic", action="store_true",
                        help="also measure recycling noise each round")
        return sp

    common(sub.add_parser("run", help="run one experiment"))
    sel = common(sub.add_parser("ablate-selection", help="compare layer selection schemes"))
    sel.add_argument("--repeats", type=int, default=1, help="seeds per setting")
    dlt = common(sub.add_parser("ablate-delta", help="sweep the number of recycled layers"))
    dlt.add_argument("--deltas", default="0,1,2", help="comma separated values")
    dlt.add_argument("--repeats", type=int, default=1)
    drp = common(sub.add_parser("ablate-drop-vs-recycle", help="recycling vs dropping"))
    drp.add_argument("--repeats", type=int, default=1)
    sub.add_parser("validate", help="run the built-in oracle checks")
    return p


def _load(args) -> ExperimentConfig:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    cfg = load_config(path)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.diagnostic:
        changes["diagnostic"] = True
    return cfg.replace(**changes) if changes else cfg


def _run_one(cfg: ExperimentConfig, out: Path, label: str, echo) -> dict:
    from .orchestrator import run_experiment
    res = run_experiment(cfg, out_dir=out)
    row = {"label": label, "seed": cfg.master_seed, "run_hash": cfg.run_hash(),
           "final_acc": res.final_accuracy, "final_loss": res.final_loss,
           "normalized_cost": res.normalized_cost}
    echo(f"{label:<22} seed={cfg.master_seed:<4} acc={fmt_float(res.final_accuracy):<11} "
         f"cost={fmt_float(res.normalized_cost)}")
    return row


def _sweep(settings: list[tuple[str, ExperimentConfig]], repeats: int, out: Path, echo) -> None:
    rows = []
    for label, cfg in settings:
        for r in range(repeats):
            c = cfg.replace(master_seed=cfg.master_seed + r)
            rows.append(_run_one(c, out / label, label, echo))
    out.mkdir(parents=True, exist_ok=True)
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "seed", "run_hash", "final_acc", "final_loss", "normalized_cost"])
        for row in rows:
            w.writerow([row["label"], row["seed"], row["run_hash"], fmt_float(row["final_acc"]),
                        fmt_float(row["final_loss"]), fmt_float(row["normalized_cost"])])


def main(argv: Sequence[str] | None = None, echo=print) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            from .validate import run_checks
            return 0 if run_checks(echo) else 1
        cfg = _load(args)
        out = Path(args.out)
        if args.command == "run":
            _run_one(cfg, out, "run", echo)
        elif args.command == "ablate-selection":
            delta = cfg.delta or max(1, cfg.n_layers // 2)
            settings = [(s, cfg.replace(scheme=s, delta=delta)) for s in SELECTION_SCHEMES]
            _sweep(settings, args.repeats, out, echo)
        elif args.command == "ablate-delta":
            try:
                deltas = [int(d) for d in args.deltas.split(",")]
            except ValueError:
                raise ConfigurationError(f"--deltas: not a comma separated list of ints: {args.deltas}")
            settings = [(f"delta_{d}", cfg.replace(delta=d)) for d in deltas]
            _sweep(settings, args.repeats, out, echo)
        elif args.command == "ablate-drop-vs-recycle":
            delta = cfg.delta or 1
            settings = [("fedavg", cfg.replace(delta=0)),
                        ("recycle", cfg.replace(delta=delta, aggregation="recycle")),
                        ("drop", cfg.replace(delta=delta, aggregation="drop"))]
            _sweep(settings, args.repeats, out, echo)
    except FedLuarError as exc:
        print(f"fedluar: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"fedluar: I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
