"""Beam-hopping MDP: observation encoding, hybrid actions, reward and metrics.

The environment follows the usual ``reset(seed) -> obs`` /
``step(action) -> (obs, reward, done, info)`` contract. ``info`` always
carries ``served_bits``, ``tau``, ``dropped`` (per-cell arrays) and the scalar
``penalty_b`` and ``penalty_p``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelMatrix, channel_matrix
from .linklayer import BeamAssignment, LinkReport, apply_slot
from .queueing import QueueBank, TrafficProcess, sample_slot_arrivals
from .scenario import Scenario


class EpisodeDone(RuntimeError):
    """step() called after the episode horizon."""


@dataclass
class HybridAction:
    pattern: np.ndarray  # (N_s, K) global cell indices
    powers: np.ndarray  # (N_s, K) watts, clamped to [P_min, P_max]
    discrete_logprob: float = 0.0
    continuous_logprob: float = 0.0
    picks: np.ndarray | None = None  # (N_s, K) indices into each coverage set
    raw_power: np.ndarray | None = None  # (N_s, K) policy-space Gaussian sample

    @property
    def logprob(self) -> float:
        return self.discrete_logprob + self.continuous_logprob


def decode_action(scn: Scenario, raw_discrete, raw_gauss) -> HybridAction:
    """Map per-beam coverage-set picks and raw powers (W) to a HybridAction.

    Repeated cells are kept (they are penalised, not forbidden) and powers are
    clamped to [P_min, P_max]; the per-satellite total is not renormalised.
    """
    picks = np.asarray(raw_discrete, dtype=np.int64)
    K = scn.beams_per_satellite
    if picks.shape != (scn.n_satellites, K):
        raise ValueError(f"expected picks of shape {(scn.n_satellites, K)}, got {picks.shape}")
    pattern = np.empty_like(picks)
    for i, cov in enumerate(scn.coverage_sets):
        if np.any(picks[i] < 0) or np.any(picks[i] >= len(cov)):
            raise ValueError(f"pick outside coverage set of satellite {i}")
        pattern[i] = np.asarray(cov)[picks[i]]
    powers = np.clip(np.asarray(raw_gauss, dtype=float), scn.p_min_w, scn.p_max_w)
    if scn.project_power:
        totals = powers.sum(axis=1, keepdims=True)
        scale = np.where(totals > scn.total_power_w, scn.total_power_w / totals, 1.0)
        powers = powers * scale
    return HybridAction(pattern=pattern, powers=powers, picks=picks)


def duplicate_count(pattern: np.ndarray) -> int:
    """Beams landing on a cell that some other beam already illuminates."""
    _, counts = np.unique(np.asarray(pattern).ravel(), return_counts=True)
    return int(np.sum(counts - 1))


def compute_penalties(a: HybridAction, scn: Scenario) -> tuple[float, float]:
    penalty_b = scn.penalty_b_coeff * duplicate_count(a.pattern)
    excess = np.maximum(0.0, np.asarray(a.powers).sum(axis=1) - scn.total_power_w)
    penalty_p = scn.penalty_p_coeff * float(excess.sum()) / scn.total_power_w
    return penalty_b, penalty_p


class RunningMeanStd:
    """Per-component running mean and variance (parallel Welford update)."""

    def __init__(self, dim: int, eps: float = 1e-8, clip: float = 10.0):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0
        self.eps = eps
        self.clip = clip

    def update(self, x: np.ndarray) -> None:
        x = np.atleast_2d(x)
        b_mean = x.mean(axis=0)
        b_var = x.var(axis=0)
        b_count = x.shape[0]
        if self.count == 0:
            self.mean, self.var, self.count = b_mean, b_var, float(b_count)
            return
        delta = b_mean - self.mean
        tot = self.count + b_count
        self.mean = self.mean + delta * b_count / tot
        m2 = self.var * self.count + b_var * b_count + delta**2 * self.count * b_count / tot
        self.var = m2 / tot
        self.count = tot

    def normalize(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mean) / np.sqrt(self.var + self.eps)
        return np.clip(z, -self.clip, self.clip)

    def state(self) -> dict:
        return {"mean": self.mean.copy(), "var": self.var.copy(), "count": np.array(self.count)}

    def load(self, st: dict) -> None:
        self.mean = np.array(st["mean"], dtype=float)
        self.var = np.array(st["var"], dtype=float)
        self.count = float(st["count"])


@dataclass
class EnvState:
    slot: int
    queues: QueueBank
    channel: ChannelMatrix
    traffic: TrafficProcess
    total_bits: float = 0.0
    delay_sum: float = 0.0  # sum over slots of the cell-averaged delay
    delay_count: int = 0
    dropped_total: int = 0
    served_bits_cells: np.ndarray = field(default=None)
    demand_bits_cells: np.ndarray = field(default=None)
    tau_sum_cells: np.ndarray = field(default=None)
    slot_throughput: list = field(default_factory=list)
    slot_delay: list = field(default_factory=list)
    arrival_hash: "hashlib._Hash" = field(default=None, repr=False)


def raw_observation(es: EnvState) -> np.ndarray:
    return np.concatenate([es.queues.backlog.astype(float), es.channel.gains.ravel()])


def encode_state(es: EnvState, normalizer: RunningMeanStd | None = None, update: bool = True) -> np.ndarray:
    """[Q_t, H_t row-major], optionally running-normalised per component."""
    x = raw_observation(es)
    if normalizer is None:
        return x
    if update:
        normalizer.update(x)
    return normalizer.normalize(x)


def episode_metrics(es: EnvState, scn: Scenario) -> tuple[float, float, float]:
    """Episode throughput (bits), LTCAD (slots) and utility G.

    G uses the throughput normaliser scaled by the number of elapsed slots, so
    it equals the slot-average of the unpenalised reward.
    """
    T = max(es.delay_count, 1)
    ups = es.total_bits
    gamma = es.delay_sum / T
    G = scn.alpha * ups / (T * scn.thr_norm) - (1 - scn.alpha) * gamma / scn.delay_norm
    return ups, gamma, G


class BeamHoppingEnv:
    """Single-agent beam-hopping environment over a fixed Scenario."""

    def __init__(self, scn: Scenario, demand_scale: float = 1.0, normalize: bool | None = None):
        self.scn = scn
        self.demand_scale = demand_scale
        normalize = scn.normalize_obs if normalize is None else normalize
        self.normalizer = RunningMeanStd(scn.obs_dim) if normalize else None
        self.update_normalizer = True
        self.state: EnvState | None = None

    @property
    def obs_dim(self) -> int:
        return self.scn.obs_dim

    def episode_rates(self, rng: np.random.Generator) -> np.ndarray:
        """Per-cell arrival rates (packets/slot) for one episode."""
        scn = self.scn
        if scn.fixed_rates_mbps is not None:
            mbps = np.array(scn.fixed_rates_mbps)
        else:
            lo, hi = scn.rate_range_mbps
            mbps = rng.uniform(lo, hi, size=scn.n_cells)
        return mbps * self.demand_scale * scn.slot_packets_per_mbps()

    def reset(self, seed: int | None = None) -> np.ndarray:
        scn = self.scn
        traffic_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        rates = self.episode_rates(traffic_rng)
        tp = TrafficProcess(rates=rates, rng_seed=0 if seed is None else seed, rng=traffic_rng)
        self.state = EnvState(
            slot=0,
            queues=QueueBank(scn.n_cells, scn.ttl_slots, scn.queue_capacity_pkts),
            channel=channel_matrix(scn, 0),
            traffic=tp,
            served_bits_cells=np.zeros(scn.n_cells),
            demand_bits_cells=np.zeros(scn.n_cells),
            tau_sum_cells=np.zeros(scn.n_cells),
            arrival_hash=hashlib.sha256(),
        )
        return self.observe()

    def observe(self) -> np.ndarray:
        return encode_state(self.state, self.normalizer, update=self.update_normalizer)

    def step(self, action: HybridAction) -> tuple[np.ndarray, float, bool, dict]:
        es = self.state
        scn = self.scn
        if es is None:
            raise RuntimeError("call reset() first")
        if es.slot >= scn.episode_slots:
            raise EpisodeDone(f"episode already has {scn.episode_slots} slots")

        assign = BeamAssignment.from_pattern(action.pattern, action.powers)
        report: LinkReport = apply_slot(assign, es.channel, es.queues, scn)
        tau = es.queues.avg_delay()
        thr = float(report.served_bits.sum())
        delay = float(tau.mean())
        penalty_b, penalty_p = compute_penalties(action, scn)
        reward = (scn.alpha * thr / scn.thr_norm
                  - (1 - scn.alpha) * delay / scn.delay_norm
                  - penalty_b - penalty_p)

        arrivals = sample_slot_arrivals(es.traffic, es.slot)
        dropped = es.queues.advance(arrivals)
        es.arrival_hash.update(arrivals.tobytes())

        es.total_bits += thr
        es.delay_sum += delay
        es.delay_count += 1
        es.dropped_total += int(dropped.sum())
        es.served_bits_cells += report.served_bits
        es.demand_bits_cells += arrivals * scn.packet_bits
        es.tau_sum_cells += tau
        es.slot_throughput.append(thr)
        es.slot_delay.append(delay)
        es.slot += 1
        es.channel = channel_matrix(scn, es.slot)

        done = es.slot >= scn.episode_slots
        info = {
            "served_bits": report.served_bits,
            "served_pkts": report.served_pkts,
            "tau": tau,
            "dropped": dropped,
            "arrivals": arrivals,
            "kappa": report.kappa,
            "sinr": report.sinr,
            "penalty_b": penalty_b,
            "penalty_p": penalty_p,
            "throughput_bits": thr,
            "delay_slots": delay,
        }
        return self.observe(), float(reward), done, info

    def metrics(self) -> tuple[float, float, float]:
        return episode_metrics(self.state, self.scn)

    def arrival_checksum(self) -> str:
        return self.state.arrival_hash.hexdigest()[:16]
