"""Demand sweep of the heuristic schedulers on the five-satellite, 161-cell scenario.

    python scripts/full_sweep.py --out runs/full --episodes 3

Optionally trains PPO first (``--train-episodes N``); a full-length run takes
many hours on one core, so the default only sweeps the baselines.
"""
import argparse
import sys
from pathlib import Path

from beamhop.baselines import KINDS
from beamhop.harness import main

ROOT = Path(__file__).resolve().parents[1]


def run(argv: list[str]) -> None:
    print("$ beamhop " + " ".join(argv), flush=True)
    code = main(argv)
    if code != 0:
        sys.exit(code)


def main_script(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "full.toml"))
    ap.add_argument("--out", default="runs/full")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--episodes", type=int, default=3, help="evaluation episodes per demand scale")
    ap.add_argument("--demand-scales", default=None, help="comma-separated; default 10 scales over the rate range")
    ap.add_argument("--train-episodes", type=int, default=0, help="also train and sweep PPO")
    args = ap.parse_args(argv)

    out = Path(args.out)
    common = ["--config", args.config, "--seed", str(args.seed), "--episodes", str(args.episodes)]
    if args.demand_scales:
        common += ["--demand-scales", args.demand_scales]
    policies = list(KINDS)
    if args.train_episodes > 0:
        run(["train", "--config", args.config, "--seed", str(args.seed), "--episodes", str(args.train_episodes),
             "--checkpoint-every", "500", "--out", str(out / "train")])
        run(["evaluate", *common, "--checkpoint", str(out / "train" / "checkpoint.npz"), "--out", str(out)])
    for policy in policies:
        run(["evaluate", *common, "--policy", policy, "--out", str(out)])


if __name__ == "__main__":
    main_script()
