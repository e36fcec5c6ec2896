"""Shared argument handling for the demo scripts."""

import argparse
from pathlib import Path

from fedluar import load_config

DEFAULT_CONFIG = Path(__file__).with_name("desk.toml")


def parse(description: str, rounds: int):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", default=str(DEFAULT_CONFIG))
    p.add_argument("--rounds", type=int, default=rounds, help=f"default {rounds}")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    cfg = load_config(args.config).replace(rounds=args.rounds, master_seed=args.seed)
    return args, cfg
