"""Train PPO on the desk scenario, then run the demand sweep and the baseline comparison.

    python scripts/run_desk_experiment.py --out runs/desk --seed 0

Everything goes through the ``beamhop`` CLI, so the files written here are the
same ones the subcommands document.
"""
import argparse
import sys
from pathlib import Path

from beamhop.harness import POLICIES, main

ROOT = Path(__file__).resolve().parents[1]


def run(argv: list[str]) -> None:
    print("$ beamhop " + " ".join(argv), flush=True)
    code = main(argv)
    if code != 0:
        sys.exit(code)


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "desk.toml"))
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--episodes", type=int, default=None, help="training episodes (default: config)")
    ap.add_argument("--eval-episodes", type=int, default=5)
    ap.add_argument("--skip-train", action="store_true", help="reuse OUT/train/checkpoint.npz")
    return ap.parse_args(argv)


def main_script(argv=None) -> None:
    args = parse_args(argv)
    out = Path(args.out)
    ckpt = out / "train" / "checkpoint.npz"
    common = ["--config", args.config, "--seed", str(args.seed)]
    if not args.skip_train:
        train = ["train", *common, "--out", str(out / "train")]
        if args.episodes is not None:
            train += ["--episodes", str(args.episodes)]
        run(train)
    for policy in POLICIES:
        extra = ["--checkpoint", str(ckpt)] if policy == "ppo" else []
        run(["evaluate", *common, "--policy", policy, *extra, "--episodes", str(args.eval_episodes),
             "--out", str(out / "sweep")])
    compare = ["compare", *common, "--checkpoint", str(ckpt), "--episodes", str(args.eval_episodes),
               "--out", str(out / "compare")]
    for policy in POLICIES:
        compare += ["--policy", policy]
    run(compare)


if __name__ == "__main__":
    main_script()
