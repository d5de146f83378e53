"""Command-line entry point and experiment orchestration.

Subcommands::

    beamhop train        --config C --seed S --out DIR [--episodes N]
    beamhop evaluate     --config C (--policy P | --checkpoint F) --out DIR
    beamhop compare      --config C --policy P --policy Q [...] --out DIR
    beamhop dump-channel --config C --slot T --out FILE

Evaluation episodes use seeds derived from ``--seed`` so that every policy in
one run sees the same arrival draws and the same satellite trajectories.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import neuralnet as nn
from .baselines import KINDS, SchedulerPolicy
from .channel import channel_matrix, write_channel_csv
from .env import BeamHoppingEnv
from .ppo import EpisodeLog, NonFiniteLoss, PpoAgent, PpoHyper, episode_seed, train
from .scenario import InfeasibleError, SchemaError, Scenario, build_scenario, load_config

POLICIES = ("ppo",) + KINDS
EVAL_OFFSET = 1_000_000  # evaluation seeds never coincide with training episodes
LOG_FIELDS = ("episode", "reward", "throughput_bits", "ltcad_slots", "L_d", "L_c", "entropy", "critic_loss")

EXIT_CONFIG = 2
EXIT_DIMENSION = 3
EXIT_NONFINITE = 4


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get("BEAMHOP_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# policies behind one interface

class PpoPolicy:
    """Frozen PPO agent; takes the modal action unless ``greedy`` is off."""

    def __init__(self, agent: PpoAgent, greedy: bool = True):
        self.agent = agent
        self.greedy = greedy
        self.rng = np.random.default_rng(0)

    def reseed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def begin(self, env: BeamHoppingEnv) -> None:
        self.agent.attach(env, training=False)

    def act(self, env: BeamHoppingEnv, obs: np.ndarray):
        action, _ = self.agent.act(obs, self.rng, greedy=self.greedy)
        return action


class HeuristicPolicy:
    def __init__(self, kind: str, w_q: float = 0.5, w_d: float = 0.5):
        self.inner = SchedulerPolicy(kind, w_q=w_q, w_d=w_d)

    def reseed(self, seed: int) -> None:
        self.inner.reseed(seed)

    def begin(self, env: BeamHoppingEnv) -> None:
        env.normalizer = None

    def act(self, env: BeamHoppingEnv, obs: np.ndarray):
        return self.inner.act(env)


@dataclass
class EpisodeResult:
    seed: int
    reward: float
    throughput_bits: float
    ltcad_slots: float
    utility: float
    dropped: int
    arrival_checksum: str
    demand_bits_cells: list = field(default_factory=list)
    served_bits_cells: list = field(default_factory=list)
    ltcad_cells: list = field(default_factory=list)


def run_episode(scn: Scenario, policy, seed: int, demand_scale: float = 1.0) -> EpisodeResult:
    """One full episode; the policy rng is reseeded from the episode seed."""
    env = BeamHoppingEnv(scn, demand_scale=demand_scale)
    policy.begin(env)
    policy.reseed(seed)
    obs = env.reset(seed)
    total = 0.0
    done = False
    while not done:
        obs, reward, done, _ = env.step(policy.act(env, obs))
        total += reward
    ups, gam, G = env.metrics()
    es = env.state
    return EpisodeResult(seed=seed, reward=total, throughput_bits=ups, ltcad_slots=gam, utility=G,
                         dropped=es.dropped_total, arrival_checksum=env.arrival_checksum(),
                         demand_bits_cells=es.demand_bits_cells.tolist(),
                         served_bits_cells=es.served_bits_cells.tolist(),
                         ltcad_cells=(es.tau_sum_cells / max(es.delay_count, 1)).tolist())


def eval_seeds(seed: int, episodes: int) -> list[int]:
    return [episode_seed(seed, EVAL_OFFSET + i) for i in range(episodes)]


def evaluate_policy(scn: Scenario, policy, seeds: list[int], demand_scale: float = 1.0) -> list[EpisodeResult]:
    return [run_episode(scn, policy, s, demand_scale) for s in seeds]


def default_demand_scales(scn: Scenario, n: int = 10) -> list[float]:
    """``n`` uniform scales spanning the configured rate range, relative to its midpoint."""
    lo, hi = scn.rate_range_mbps
    mid = 0.5 * (lo + hi)
    return [float(x) for x in np.linspace(lo, hi, n) / mid]


# ---------------------------------------------------------------------------
# file formats

def write_rows(path: Path, fields: tuple[str, ...] | list[str], rows: list[dict]) -> None:
    """CSV with a header row; floats are written with ``repr`` so they parse back exactly."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([repr(float(row[k])) if isinstance(row[k], (float, np.floating)) else row[k]
                        for k in fields])


def read_rows(path: Path) -> list[dict]:
    def conv(v: str):
        try:
            return int(v)
        except ValueError:
            pass
        try:
            return float(v)
        except ValueError:
            return v
    with open(path, newline="") as fh:
        return [{k: conv(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_training_log(path: Path, log: list[EpisodeLog]) -> None:
    write_rows(path, LOG_FIELDS, [asdict(e) for e in log])


def write_json(path: Path, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands

def _load(args) -> tuple[Scenario, dict]:
    cfg = load_config(args.config)
    return build_scenario(cfg), cfg


def _hyper(cfg: dict, args) -> PpoHyper:
    hyper = PpoHyper.from_config(cfg.get("ppo"))
    if getattr(args, "episodes", None) is not None and args.command == "train":
        hyper.episodes = args.episodes
    return hyper


def cmd_train(args) -> int:
    scn, cfg = _load(args)
    hyper = _hyper(cfg, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    every = args.checkpoint_every

    def on_episode(entry: EpisodeLog, agent: PpoAgent) -> None:
        if every and (entry.episode + 1) % every == 0:
            agent.save(out / f"checkpoint_ep{entry.episode + 1:06d}.npz", {"episode": entry.episode + 1})

    t0 = time.perf_counter()
    agent, log = train(lambda: BeamHoppingEnv(scn), hyper, seed=args.seed, on_episode=on_episode)
    wall = time.perf_counter() - t0
    write_training_log(out / "train_log.csv", log)
    agent.save(out / "checkpoint.npz", {"episodes": len(log), "seed": args.seed,
                                         "scenario": scn.config_digest})
    final = run_episode(scn, PpoPolicy(agent), eval_seeds(args.seed, 1)[0])
    result = {
        "scenario_digest": scn.config_digest,
        "policy": "ppo",
        "seed": args.seed,
        "episodes": len(log),
        "reward": [e.reward for e in log],
        "throughput_bits": [e.throughput_bits for e in log],
        "ltcad_slots": [e.ltcad_slots for e in log],
        "final_episode": {"seed": final.seed, "demand_bits": final.demand_bits_cells,
                          "served_bits": final.served_bits_cells, "ltcad_slots": final.ltcad_cells},
        "wall_clock_s": wall,
    }
    write_json(out / "result.json", result)
    print(f"trained {len(log)} episodes in {wall:.1f} s -> {out}")
    return 0


def make_policy(name: str, scn: Scenario, cfg: dict, checkpoint: str | None, greedy: bool):
    if name == "ppo":
        if checkpoint is None:
            raise SystemExit("--policy ppo needs --checkpoint")
        agent = PpoAgent.load(checkpoint, scn, PpoHyper.from_config(cfg.get("ppo")))
        return PpoPolicy(agent, greedy=greedy)
    b = cfg.get("baselines", {})
    return HeuristicPolicy(name, w_q=b.get("uswgp_w_q", 0.5), w_d=b.get("uswgp_w_d", 0.5))


def _summary(results: list[EpisodeResult]) -> dict:
    thr = np.array([r.throughput_bits for r in results])
    gam = np.array([r.ltcad_slots for r in results])
    G = np.array([r.utility for r in results])
    return {"throughput_mean": float(thr.mean()), "throughput_std": float(thr.std()),
            "ltcad_mean": float(gam.mean()), "ltcad_std": float(gam.std()),
            "utility_mean": float(G.mean()), "utility_std": float(G.std())}


def _evaluate_job(job):
    config, name, checkpoint, greedy, seeds, scale = job
    cfg = load_config(config)
    scn = build_scenario(cfg)
    return evaluate_policy(scn, make_policy(name, scn, cfg, checkpoint, greedy), seeds, scale)


def _run_jobs(jobs: list) -> list:
    workers = min(n_workers(), len(jobs))
    if workers <= 1:
        return [_evaluate_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evaluate_job, jobs))


def _scales(args, scn: Scenario) -> list[float]:
    if args.demand_scales:
        return [float(x) for x in args.demand_scales.split(",")]
    return default_demand_scales(scn)


def _check_checkpoint(args, scn: Scenario, cfg: dict) -> None:
    # load once up front so dimension problems surface before any work starts
    if args.checkpoint is not None:
        PpoAgent.load(args.checkpoint, scn, PpoHyper.from_config(cfg.get("ppo")))


def cmd_evaluate(args) -> int:
    scn, cfg = _load(args)
    name = args.policy[0] if args.policy else ("ppo" if args.checkpoint else None)
    if name is None:
        raise SystemExit("evaluate needs --policy or --checkpoint")
    _check_checkpoint(args, scn, cfg)
    scales = _scales(args, scn)
    seeds = eval_seeds(args.seed, args.episodes)
    jobs = [(args.config, name, args.checkpoint, not args.stochastic, seeds, s) for s in scales]
    per_scale = _run_jobs(jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for scale, results in zip(scales, per_scale):
        row = {"policy": name, "demand_scale": float(scale),
               "demand_mbps": float(np.mean([np.sum(r.demand_bits_cells) for r in results])
                                    / (scn.episode_slots * scn.slot_duration_s) / 1e6)}
        row.update(_summary(results))
        rows.append(row)
    fields = ["policy", "demand_scale", "demand_mbps", "throughput_mean", "throughput_std",
              "ltcad_mean", "ltcad_std", "utility_mean", "utility_std"]
    write_rows(out / f"eval_{name}.csv", fields, rows)
    write_json(out / f"eval_{name}.json", {
        "scenario_digest": scn.config_digest, "policy": name, "seed": args.seed,
        "scales": [{"demand_scale": s, "episodes": [asdict(r) for r in res]}
                   for s, res in zip(scales, per_scale)],
    })
    for row in rows:
        print(f"{name:7s} scale {row['demand_scale']:.3f}  thr {row['throughput_mean']:.4e} bits  "
              f"ltcad {row['ltcad_mean']:.3f} slots  G {row['utility_mean']:+.4f}")
    return 0


def pct(a: float, b: float) -> float:
    """(a - b) / b in percent; nan when b is zero."""
    return float("nan") if b == 0 else 100.0 * (a - b) / b


def compare_table(series: dict[str, list[EpisodeResult]]) -> list[dict]:
    means = {p: _summary(r) for p, r in series.items()}
    rows = []
    for a in series:
        for b in series:
            ma, mb = means[a], means[b]
            rows.append({"policy_a": a, "policy_b": b,
                         "throughput_a": ma["throughput_mean"], "throughput_b": mb["throughput_mean"],
                         "ltcad_a": ma["ltcad_mean"], "ltcad_b": mb["ltcad_mean"],
                         "utility_a": ma["utility_mean"], "utility_b": mb["utility_mean"],
                         "throughput_gain_pct": pct(ma["throughput_mean"], mb["throughput_mean"]),
                         "ltcad_change_pct": pct(ma["ltcad_mean"], mb["ltcad_mean"])})
    return rows


def cmd_compare(args) -> int:
    scn, cfg = _load(args)
    names = args.policy or []
    if len(names) < 2:
        raise SystemExit("compare needs at least two --policy flags")
    _check_checkpoint(args, scn, cfg)
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",")]
    else:
        seeds = eval_seeds(args.seed, args.episodes)
    scale = float(args.demand_scales.split(",")[0]) if args.demand_scales else 1.0
    jobs = [(args.config, n, args.checkpoint, not args.stochastic, seeds, scale) for n in names]
    series = dict(zip(names, _run_jobs(jobs)))
    checksums = {n: [r.arrival_checksum for r in res] for n, res in series.items()}
    crn_ok = len({tuple(c) for c in checksums.values()}) == 1
    rows = compare_table(series)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "compare.csv", list(rows[0]), rows)
    per_episode = [{"policy": n, "seed": r.seed, "reward": r.reward, "throughput_bits": r.throughput_bits,
                    "ltcad_slots": r.ltcad_slots, "utility": r.utility, "arrival_checksum": r.arrival_checksum}
                   for n, res in series.items() for r in res]
    write_rows(out / "compare_episodes.csv", list(per_episode[0]), per_episode)
    write_json(out / "compare.json", {"scenario_digest": scn.config_digest, "seeds": seeds,
                                      "demand_scale": scale, "common_random_numbers": crn_ok,
                                      "arrival_checksums": checksums, "table": rows})
    for row in rows:
        if row["policy_a"] != row["policy_b"]:
            print(f"{row['policy_a']:7s} vs {row['policy_b']:7s}  throughput {row['throughput_gain_pct']:+7.2f}%  "
                  f"ltcad {row['ltcad_change_pct']:+7.2f}%")
    return 0 if crn_ok else 1


def cmd_dump_channel(args) -> int:
    scn, _ = _load(args)
    H = channel_matrix(scn, args.slot)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_channel_csv(H, out)
    print(f"wrote {scn.n_satellites}x{scn.n_cells} channel gains for slot {args.slot} -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="beamhop", description="Beam-hopping simulator and PPO trainer.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario TOML file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory (file for dump-channel)")

    p = sub.add_parser("train", help="train PPO and write log, checkpoint and result")
    common(p)
    p.add_argument("--episodes", type=int, default=None, help="override [ppo].episodes")
    p.add_argument("--checkpoint-every", type=int, default=0, help="also checkpoint every N episodes")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("evaluate", cmd_evaluate, "demand sweep for one policy"),
                                 ("compare", cmd_compare, "pairwise comparison under common random numbers")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--policy", action="append", choices=POLICIES,
                       help="policy to run (repeat for compare)")
        p.add_argument("--checkpoint", default=None, help="PPO checkpoint (.npz)")
        p.add_argument("--episodes", type=int, default=5, help="evaluation episodes per scale")
        p.add_argument("--demand-scales", default=None, help="comma-separated traffic scale factors")
        p.add_argument("--stochastic", action="store_true", help="PPO samples actions instead of taking the mode")
        if name == "compare":
            p.add_argument("--seeds", default=None, help="comma-separated episode seeds")
        p.set_defaults(func=func)

    p = sub.add_parser("dump-channel", help="write the channel gain matrix of one slot as CSV")
    common(p)
    p.add_argument("--slot", type=int, default=0)
    p.set_defaults(func=cmd_dump_channel)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if not Path(args.config).is_file():
        print(f"beamhop: config file not found: {args.config}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (SchemaError, InfeasibleError, OSError) as exc:
        print(f"beamhop: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except nn.DimensionError as exc:
        print(f"beamhop: checkpoint does not fit the scenario: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except NonFiniteLoss as exc:
        print(f"beamhop: training aborted: {exc}", file=sys.stderr)
        return EXIT_NONFINITE


if __name__ == "__main__":
    sys.exit(main())
