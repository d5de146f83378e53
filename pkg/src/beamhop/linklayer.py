"""SINR, rate and per-slot service under full frequency reuse."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix
from .queueing import QueueBank
from .scenario import Scenario


class NotServedError(ValueError):
    """The cell is not illuminated by any beam."""


@dataclass(frozen=True)
class BeamAssignment:
    """Active beams per satellite as (cell, power_w) pairs.

    Built from a decoded action; a cell appears at most once per satellite.
    """

    beams: tuple[tuple[tuple[int, float], ...], ...]

    @classmethod
    def from_pattern(cls, pattern: np.ndarray, powers: np.ndarray) -> "BeamAssignment":
        """Keep the first occurrence of a cell within each satellite's row.

        A repeated pick on the same satellite switches that beam off; the
        repetition is still charged by the duplicate-illumination penalty.
        """
        rows = []
        for cells, pw in zip(np.asarray(pattern), np.asarray(powers, dtype=float)):
            seen = set()
            row = []
            for c, p in zip(cells, pw):
                c = int(c)
                if c in seen:
                    continue
                seen.add(c)
                row.append((c, float(p)))
            rows.append(tuple(row))
        return cls(tuple(rows))

    def validate(self, scn: Scenario) -> None:
        for i, row in enumerate(self.beams):
            if len(row) > scn.beams_per_satellite:
                raise ValueError(f"satellite {i} has {len(row)} beams, more than K")
            cells = [c for c, _ in row]
            if len(set(cells)) != len(cells):
                raise ValueError(f"satellite {i} illuminates a cell twice")
            for c, p in row:
                if c not in scn.coverage_sets[i]:
                    raise ValueError(f"satellite {i} cannot reach cell {c}")
                if not (0.0 <= p <= scn.p_max_w * (1 + 1e-12)):
                    raise ValueError(f"beam power {p} outside [0, P_max]")

    def indicator(self, scn: Scenario) -> tuple[np.ndarray, np.ndarray]:
        """x_{i,n} in {0,1} and p_{i,n} >= 0 as dense (N_s, N_c) arrays."""
        x = np.zeros((scn.n_satellites, scn.n_cells), dtype=np.int64)
        p = np.zeros((scn.n_satellites, scn.n_cells))
        for i, row in enumerate(self.beams):
            for c, pw in row:
                x[i, c] = 1
                p[i, c] = pw
        return x, p

    def flat(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        sats, cells, pows = [], [], []
        for i, row in enumerate(self.beams):
            for c, p in row:
                sats.append(i)
                cells.append(c)
                pows.append(p)
        return (np.asarray(sats, dtype=np.int64), np.asarray(cells, dtype=np.int64),
                np.asarray(pows, dtype=float))


@dataclass
class LinkReport:
    serving_sat: np.ndarray  # -1 where not served
    sinr: np.ndarray
    rate_bps: np.ndarray
    served_bits: np.ndarray
    served_pkts: np.ndarray
    kappa: np.ndarray


def beam_sinrs(assign: BeamAssignment, H: ChannelMatrix, scn: Scenario):
    """SINR of every active beam at its own target cell.

    Returns (sat, cell, power, sinr) arrays over active beams. Every other
    active beam, on the same or another satellite, counts as interference.
    """
    sats, cells, pows = assign.flat()
    if len(sats) == 0:
        return sats, cells, pows, np.zeros(0)
    # g[m, q]: gain at beam m's cell of beam q (satellite sats[q] steered at cells[q])
    g = H.beam_gains[sats[None, :], cells[None, :], cells[:, None]]
    rx = g * pows[None, :]
    signal = np.diag(rx)
    interference = rx.sum(axis=1) - signal
    return sats, cells, pows, signal / (scn.noise_power_w + interference)


def compute_sinr(assign: BeamAssignment, H: ChannelMatrix, scn: Scenario, cell: int) -> float:
    """SINR of the best beam on ``cell``."""
    _, cells, _, sinr = beam_sinrs(assign, H, scn)
    hit = cells == cell
    if not np.any(hit):
        raise NotServedError(f"cell {cell} is not illuminated")
    return float(sinr[hit].max())


def rate(sinr, bandwidth_hz: float):
    """Shannon rate B log2(1 + SINR) in bit/s."""
    s = np.asarray(sinr, dtype=float)
    if np.any(s < 0):
        raise ValueError("SINR must be non-negative")
    out = bandwidth_hz * np.log2(1.0 + s)
    return float(out) if out.ndim == 0 else out


def serving_links(assign: BeamAssignment, H: ChannelMatrix, scn: Scenario):
    """Per-cell serving satellite (max-SINR beam, -1 if dark) and SINR."""
    sats, cells, _, sinr = beam_sinrs(assign, H, scn)
    serving = np.full(scn.n_cells, -1, dtype=np.int64)
    best = np.zeros(scn.n_cells)
    # first max wins on exact ties (lower satellite index first in beam order)
    for s, c, v in zip(sats, cells, sinr):
        if serving[c] < 0 or v > best[c]:
            serving[c] = s
            best[c] = v
    return serving, best


def apply_slot(assign: BeamAssignment, H: ChannelMatrix, queues: QueueBank, scn: Scenario) -> LinkReport:
    """Serve every illuminated cell's queue for one slot."""
    serving, sinr = serving_links(assign, H, scn)
    kappa = (serving >= 0).astype(np.int64)
    r = np.where(kappa > 0, scn.bandwidth_hz * np.log2(1.0 + sinr), 0.0)
    backlog = queues.backlog
    slot_bits = r * scn.slot_duration_s
    budgets = np.floor(slot_bits / scn.packet_bits).astype(np.int64)
    served_pkts = queues.serve(budgets)
    served_bits = np.minimum(kappa * slot_bits, backlog * scn.packet_bits)
    return LinkReport(serving_sat=serving, sinr=sinr, rate_bps=r, served_bits=served_bits,
                      served_pkts=served_pkts, kappa=kappa)


def capacity_bound(scn: Scenario, sinr_max: float) -> float:
    return scn.n_satellites * scn.beams_per_satellite * scn.bandwidth_hz * math.log2(1 + sinr_max) * scn.slot_duration_s
