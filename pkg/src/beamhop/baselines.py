"""Greedy per-satellite schedulers used as comparison points.

Every scheduler picks K cells per satellite and splits the satellite power
evenly among them. Ties go to the lower cell index; overlapping coverage is
not coordinated, so two satellites may pick the same cell.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import HybridAction
from .queueing import QueueBank
from .scenario import Scenario

KINDS = ("tp", "dp", "uswgp", "random")


def even_power(scn: Scenario) -> float:
    # P_tot/K, kept inside [P_min, P_max] (only binds for K = 1 with a tight P_max)
    return float(np.clip(scn.total_power_w / scn.beams_per_satellite, scn.p_min_w, scn.p_max_w))


def top_k(scores: np.ndarray, cells: tuple[int, ...], k: int) -> np.ndarray:
    """The k cells with the largest score, ties to the lower cell index."""
    cells_arr = np.asarray(cells)
    order = np.lexsort((cells_arr, -scores[cells_arr]))
    return cells_arr[order[:k]]


def _greedy(scores: np.ndarray, scn: Scenario) -> HybridAction:
    K = scn.beams_per_satellite
    pattern = np.empty((scn.n_satellites, K), dtype=np.int64)
    picks = np.empty_like(pattern)
    for i, cov in enumerate(scn.coverage_sets):
        chosen = top_k(scores, cov, K)
        pattern[i] = chosen
        picks[i] = np.searchsorted(np.asarray(cov), chosen)
    powers = np.full((scn.n_satellites, K), even_power(scn))
    return HybridAction(pattern=pattern, powers=powers, picks=picks)


def _backlog(queues) -> np.ndarray:
    return np.asarray(getattr(queues, "backlog", queues), dtype=float)


def tp_bh(queues: QueueBank, scn: Scenario) -> HybridAction:
    """Throughput priority: the K longest queues of each satellite."""
    return _greedy(_backlog(queues), scn)


def dp_bh(queues: QueueBank, scn: Scenario) -> HybridAction:
    """Delay priority: the K cells with the highest mean packet age."""
    return _greedy(queues.avg_delay(), scn)


def uswgp_weights(queues: QueueBank, scn: Scenario, w_q: float = 0.5, w_d: float = 0.5) -> np.ndarray:
    return w_q * queues.backlog / scn.queue_capacity_pkts + w_d * queues.avg_delay() / scn.ttl_slots


def uswgp_bh(queues: QueueBank, scn: Scenario, w_q: float = 0.5, w_d: float = 0.5) -> HybridAction:
    """User service weight: a demand term plus a delay term, top K per satellite."""
    return _greedy(uswgp_weights(queues, scn, w_q, w_d), scn)


def random_policy(rng: np.random.Generator, scn: Scenario) -> HybridAction:
    """Uniform K-subset of each coverage set, even power split."""
    K = scn.beams_per_satellite
    pattern = np.empty((scn.n_satellites, K), dtype=np.int64)
    picks = np.empty_like(pattern)
    for i, cov in enumerate(scn.coverage_sets):
        idx = np.sort(rng.choice(len(cov), size=K, replace=False))
        picks[i] = idx
        pattern[i] = np.asarray(cov)[idx]
    powers = np.full((scn.n_satellites, K), even_power(scn))
    return HybridAction(pattern=pattern, powers=powers, picks=picks)


@dataclass
class SchedulerPolicy:
    """A heuristic behind the common ``act(env)`` interface used by the harness."""

    kind: str
    w_q: float = 0.5
    w_d: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown scheduler {self.kind!r}; expected one of {KINDS}")
        self.rng = np.random.default_rng(self.seed)

    def reseed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def act(self, env) -> HybridAction:
        q = env.state.queues
        scn = env.scn
        if self.kind == "tp":
            return tp_bh(q, scn)
        if self.kind == "dp":
            return dp_bh(q, scn)
        if self.kind == "uswgp":
            return uswgp_bh(q, scn, self.w_q, self.w_d)
        return random_policy(self.rng, scn)
