"""Per-cell FIFO queues tracked as packet counts per waiting age."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AgeQueue:
    """Packets bucketed by how many slots they have waited.

    ``buckets[l - 1]`` holds the packets that have waited ``l`` slots,
    ``l = 1..ttl``. Service drains the oldest bucket first.
    """

    ttl: int
    capacity_pkts: int
    buckets: np.ndarray = field(default=None)
    cum_arrived: int = 0
    cum_served: int = 0
    cum_dropped: int = 0

    def __post_init__(self) -> None:
        if self.buckets is None:
            self.buckets = np.zeros(self.ttl, dtype=np.int64)
        else:
            self.buckets = np.asarray(self.buckets, dtype=np.int64).copy()
            if self.buckets.shape != (self.ttl,):
                raise ValueError(f"buckets must have length ttl={self.ttl}")

    @property
    def backlog(self) -> int:
        return int(self.buckets.sum())

    def copy(self) -> "AgeQueue":
        return AgeQueue(self.ttl, self.capacity_pkts, self.buckets.copy(),
                        self.cum_arrived, self.cum_served, self.cum_dropped)


def serve(q: AgeQueue, packet_budget: int) -> int:
    """Serve up to ``packet_budget`` packets, oldest first. Returns packets served."""
    if packet_budget < 0:
        raise ValueError("packet budget must be non-negative")
    remaining = int(packet_budget)
    served = 0
    for idx in range(q.ttl - 1, -1, -1):
        if remaining == 0:
            break
        take = min(remaining, int(q.buckets[idx]))
        q.buckets[idx] -= take
        remaining -= take
        served += take
    q.cum_served += served
    return served


def advance_slot(q: AgeQueue, arrivals: int) -> int:
    """Age every packet by one slot, expire the oldest bucket and admit arrivals.

    Returns the packets dropped this slot (TTL expiry plus capacity overflow).
    """
    expired = int(q.buckets[-1])
    q.buckets[1:] = q.buckets[:-1]
    q.buckets[0] = 0
    room = q.capacity_pkts - int(q.buckets.sum())
    admitted = min(int(arrivals), max(room, 0))
    q.buckets[0] = admitted
    dropped = expired + (int(arrivals) - admitted)
    q.cum_arrived += int(arrivals)
    q.cum_dropped += dropped
    return dropped


def avg_delay(q: AgeQueue) -> float:
    """Mean waiting age in slots; zero for an empty queue."""
    total = q.buckets.sum()
    if total == 0:
        return 0.0
    ages = np.arange(1, q.ttl + 1)
    return float((ages * q.buckets).sum() / total)


@dataclass
class TrafficProcess:
    """Poisson arrivals with per-cell rates in packets per slot."""

    rates: np.ndarray  # (N_c,) or (n_slots, N_c) for regime-switching traffic
    rng_seed: int = 0
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.rates = np.asarray(self.rates, dtype=float)
        if np.any(self.rates < 0):
            raise ValueError("arrival rates must be non-negative")
        if self.rng is None:
            self.rng = np.random.default_rng(self.rng_seed)

    def rate(self, cell: int, slot: int) -> float:
        if self.rates.ndim == 1:
            return float(self.rates[cell])
        return float(self.rates[min(slot, len(self.rates) - 1), cell])

    def slot_rates(self, slot: int) -> np.ndarray:
        if self.rates.ndim == 1:
            return self.rates
        return self.rates[min(slot, len(self.rates) - 1)]


def sample_arrivals(tp: TrafficProcess, cell: int, slot: int, rng: np.random.Generator | None = None) -> int:
    rng = tp.rng if rng is None else rng
    return int(rng.poisson(tp.rate(cell, slot)))


def sample_slot_arrivals(tp: TrafficProcess, slot: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Arrivals for every cell in one slot, drawn in a single call."""
    rng = tp.rng if rng is None else rng
    return rng.poisson(tp.slot_rates(slot)).astype(np.int64)


class QueueBank:
    """All cells' age queues as one (N_c, ttl) array; same semantics as AgeQueue."""

    def __init__(self, n_cells: int, ttl: int, capacity_pkts: int):
        self.ttl = ttl
        self.capacity_pkts = capacity_pkts
        self.buckets = np.zeros((n_cells, ttl), dtype=np.int64)
        self.cum_arrived = np.zeros(n_cells, dtype=np.int64)
        self.cum_served = np.zeros(n_cells, dtype=np.int64)
        self.cum_dropped = np.zeros(n_cells, dtype=np.int64)

    @property
    def backlog(self) -> np.ndarray:
        return self.buckets.sum(axis=1)

    def queue(self, cell: int) -> AgeQueue:
        """Snapshot of one cell as an AgeQueue."""
        return AgeQueue(self.ttl, self.capacity_pkts, self.buckets[cell],
                        int(self.cum_arrived[cell]), int(self.cum_served[cell]),
                        int(self.cum_dropped[cell]))

    def serve(self, budgets: np.ndarray) -> np.ndarray:
        budgets = np.asarray(budgets, dtype=np.int64)
        if np.any(budgets < 0):
            raise ValueError("packet budgets must be non-negative")
        oldest_first = self.buckets[:, ::-1]
        before = np.cumsum(oldest_first, axis=1) - oldest_first
        take = np.clip(budgets[:, None] - before, 0, oldest_first)
        self.buckets -= take[:, ::-1]
        served = take.sum(axis=1)
        self.cum_served += served
        return served

    def advance(self, arrivals: np.ndarray) -> np.ndarray:
        arrivals = np.asarray(arrivals, dtype=np.int64)
        expired = self.buckets[:, -1].copy()
        self.buckets[:, 1:] = self.buckets[:, :-1]
        self.buckets[:, 0] = 0
        room = np.maximum(self.capacity_pkts - self.buckets.sum(axis=1), 0)
        admitted = np.minimum(arrivals, room)
        self.buckets[:, 0] = admitted
        dropped = expired + arrivals - admitted
        self.cum_arrived += arrivals
        self.cum_dropped += dropped
        return dropped

    def avg_delay(self) -> np.ndarray:
        total = self.buckets.sum(axis=1)
        weighted = self.buckets @ np.arange(1, self.ttl + 1)
        out = np.zeros(len(total))
        nz = total > 0
        out[nz] = weighted[nz] / total[nz]
        return out
