"""Antenna pattern, free-space loss and per-slot channel gain matrices."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .scenario import Scenario, geometry_arrays

_SERIES_LIMIT = 12.0
_SERIES_TERMS = 40


class DomainError(ValueError):
    pass


def _j1_series(x: np.ndarray) -> np.ndarray:
    # sum_k (-1)^k (x/2)^(2k+1) / (k! (k+1)!)
    half = x / 2.0
    term = half.copy()
    total = term.copy()
    sq = half * half
    for k in range(1, _SERIES_TERMS):
        term = term * (-sq) / (k * (k + 1))
        total = total + term
    return total


def _j1_asymptotic(x: np.ndarray) -> np.ndarray:
    # Hankel expansion with mu = 4 n^2 = 4
    mu = 4.0
    z = 8.0 * x
    p = np.ones_like(x)
    q = np.zeros_like(x)
    term = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    # term_k = prod_{j<=k} (mu - (2j-1)^2) / (j z); even k -> P, odd k -> Q.
    # The series diverges: stop each entry at its smallest term.
    for k in range(1, 60):
        nxt = term * (mu - (2 * k - 1) ** 2) / (k * z)
        active &= (np.abs(nxt) < np.abs(term)) & (np.abs(term) > 1e-17)
        term = np.where(active, nxt, term)
        inc = np.where(active, term, 0.0)
        sign = -1.0 if (k // 2) % 2 else 1.0
        if k % 2:
            q = q + sign * inc
        else:
            p = p + sign * inc
        if not active.any():
            break
    chi = x - 0.75 * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(chi) - q * np.sin(chi))


def bessel_j1(x):
    """First-kind Bessel function of order one.

    Power series below |x| = 12, Hankel asymptotic expansion above; absolute
    error stays below 1e-10 on the real line.
    """
    arr = np.asarray(x, dtype=float)
    ax = np.abs(arr)
    out = np.empty_like(ax)
    small = ax < _SERIES_LIMIT
    if np.any(small):
        out[small] = _j1_series(ax[small])
    if np.any(~small):
        out[~small] = _j1_asymptotic(ax[~small])
    out = np.sign(arr) * out
    return float(out) if out.ndim == 0 else out


def aperture_factor(scn: Scenario) -> float:
    """2*pi*a/lambda, the argument scale of the pattern."""
    return 2.0 * math.pi * scn.aperture_radius_m / scn.wavelength_m


def g_norm(theta, scn: Scenario):
    """Normalised circular-aperture pattern |2 J1(u)/u|^2 with u = (2 pi a / lambda) sin(theta)."""
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0.0) or np.any(th > math.pi / 2 + 1e-12):
        raise DomainError("off-axis angle must lie in [0, pi/2]")
    u = aperture_factor(scn) * np.sin(th)
    out = np.ones_like(u)
    nz = u > 0.0
    if np.any(nz):
        un = u[nz]
        out[nz] = (2.0 * bessel_j1(un) / un) ** 2
    return float(out) if out.ndim == 0 else out


def tx_gain(theta, scn: Scenario):
    """Transmit gain (linear) at off-axis angle ``theta`` in radians."""
    return scn.max_tx_gain_linear * g_norm(theta, scn)


def path_loss(l, wavelength: float):
    """Free-space loss (lambda / (4 pi l))^2 as a linear gain."""
    arr = np.asarray(l, dtype=float)
    if np.any(arr <= 0.0):
        raise DomainError("distance must be positive")
    out = (wavelength / (4.0 * math.pi * arr)) ** 2
    return float(out) if out.ndim == 0 else out


def half_power_angle(scn: Scenario, tol: float = 1e-13) -> float:
    """Off-axis angle where the normalised pattern first drops to 0.5 (bisection)."""
    lo, hi = 0.0, math.asin(min(1.0, 3.8317 / aperture_factor(scn)))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g_norm(mid, scn) > 0.5:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def realized_beamwidth_deg(scn: Scenario) -> float:
    """Full 3 dB beamwidth implied by the aperture radius and carrier."""
    return 2.0 * math.degrees(half_power_angle(scn))


@dataclass(frozen=True)
class ChannelMatrix:
    """Channel state for one slot.

    ``gains[i, n]`` is the nadir-referenced channel gain h_{i,n} (zero outside
    coverage/horizon). ``beam_gains[j, k, n]`` is the gain at cell n of
    satellite j's beam steered at cell k; the diagonal k == n is the serving
    link and off-diagonal entries are what an interfered cell receives.
    """

    slot: int
    gains: np.ndarray
    beam_gains: np.ndarray
    wavelength_m: float


def channel_gain(scn: Scenario, sat: int, cell: int, slot: int) -> float:
    if cell not in scn.coverage_sets[sat]:
        return 0.0
    ranges, theta, _, visible = _geometry(scn, slot)
    if not visible[sat, cell]:
        return 0.0
    return (tx_gain(float(theta[sat, cell]), scn)
            * path_loss(float(ranges[sat, cell]), scn.wavelength_m)
            * scn.rx_gain_linear)


def _geometry(scn: Scenario, slot: int):
    if scn.motion == "static":
        slot = 0
    return _geometry_cached(scn, slot)


@lru_cache(maxsize=256)
def _geometry_cached(scn: Scenario, slot: int):
    return geometry_arrays(scn, slot)


# Episodes replay the same slot indices, so orbit-mode matrices are kept until
# this many bytes are held; later slots are rebuilt on every call.
CACHE_BYTES = 512 * 2**20
_orbit_cache: dict[tuple[Scenario, int], ChannelMatrix] = {}
_orbit_cache_bytes = 0


def channel_matrix(scn: Scenario, slot: int) -> ChannelMatrix:
    global _orbit_cache_bytes
    if scn.motion == "static":
        return _static_matrix(scn, slot)
    key = (scn, slot)  # Scenario hashes by identity
    hit = _orbit_cache.get(key)
    if hit is not None:
        return hit
    H = _build_matrix(scn, slot)
    size = H.gains.nbytes + H.beam_gains.nbytes
    if _orbit_cache_bytes + size <= CACHE_BYTES:
        _orbit_cache[key] = H
        _orbit_cache_bytes += size
    return H


def clear_cache() -> None:
    global _orbit_cache_bytes
    _orbit_cache.clear()
    _orbit_cache_bytes = 0
    _static_cache.cache_clear()
    _geometry_cached.cache_clear()


@lru_cache(maxsize=32)
def _static_cache(scn: Scenario) -> ChannelMatrix:
    return _build_matrix(scn, 0)


def _static_matrix(scn: Scenario, slot: int) -> ChannelMatrix:
    base = _static_cache(scn)
    return ChannelMatrix(slot=slot, gains=base.gains, beam_gains=base.beam_gains,
                         wavelength_m=base.wavelength_m)


def _build_matrix(scn: Scenario, slot: int) -> ChannelMatrix:
    ranges, theta, dirs, visible = _geometry(scn, slot)
    cover = scn.coverage_mask() & visible
    pl = path_loss(ranges, scn.wavelength_m)
    gains = np.where(cover, tx_gain(theta, scn) * pl * scn.rx_gain_linear, 0.0)

    # angle at satellite j between the direction to the beam centre k and to the cell n
    dot = np.einsum("jkd,jnd->jkn", dirs, dirs)
    cross = np.linalg.norm(np.cross(dirs[:, :, None, :], dirs[:, None, :, :]), axis=-1)
    offaxis = np.arctan2(cross, dot)
    beam = tx_gain(np.minimum(offaxis, math.pi / 2), scn)
    beam = beam * (pl * scn.rx_gain_linear)[:, None, :]
    beam = np.where(cover[:, :, None] & visible[:, None, :], beam, 0.0)
    gains.setflags(write=False)
    beam.setflags(write=False)
    return ChannelMatrix(slot=slot, gains=gains, beam_gains=beam, wavelength_m=scn.wavelength_m)


def write_channel_csv(H: ChannelMatrix, path) -> None:
    """One row per satellite, one column per cell, linear gains."""
    np.savetxt(path, H.gains, delimiter=",", fmt="%.17g")


def read_channel_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))
