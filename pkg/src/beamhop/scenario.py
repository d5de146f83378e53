"""World description: cells, satellites, coverage sets and physical constants.

A :class:`Scenario` is built once from a parsed TOML configuration and never
mutated afterwards. Geometry is expressed in an Earth-centred frame
(``earth_model = "spherical"``) or in a local flat frame with the ground at
z = 0 (``earth_model = "flat"``), the latter being mostly useful for
hand-checkable tests.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

MU_EARTH = 3.986004418e14  # m^3/s^2
R_EARTH = 6_371_000.0  # m
SPEED_OF_LIGHT = 299_792_458.0  # m/s
BOLTZMANN = 1.380649e-23  # J/K


class SchemaError(ValueError):
    """Configuration is missing a field or a field has the wrong type."""


class InfeasibleError(ValueError):
    """Configuration parses but violates a scenario invariant."""


class HorizonError(ValueError):
    """Cell is not above the satellite's horizon."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def orbital_speed(altitude_m: float) -> float:
    """Circular orbital speed in m/s at the given altitude."""
    return math.sqrt(MU_EARTH / (R_EARTH + altitude_m))


def orbital_period(altitude_m: float) -> float:
    r = R_EARTH + altitude_m
    return 2.0 * math.pi * math.sqrt(r**3 / MU_EARTH)


@dataclass(frozen=True)
class SatelliteState:
    position_ecef_m: np.ndarray
    boresight: np.ndarray


@dataclass(frozen=True, eq=False)
class Scenario:
    n_satellites: int
    n_cells: int
    beams_per_satellite: int
    orbit_altitude_m: float
    carrier_hz: float
    bandwidth_hz: float
    total_power_w: float
    p_min_w: float
    p_max_w: float
    aperture_radius_m: float
    max_tx_gain_linear: float
    rx_gain_linear: float
    noise_temp_k: float
    slot_duration_s: float
    packet_bits: float
    ttl_slots: int
    queue_capacity_pkts: int
    cell_radius_m: float
    cell_offsets_m: np.ndarray  # (N_c, 2) east/north ground offsets
    cell_positions_m: np.ndarray  # (N_c, 3)
    coverage_sets: tuple[tuple[int, ...], ...]
    rate_range_mbps: tuple[float, float]
    fixed_rates_mbps: np.ndarray | None
    episode_slots: int
    alpha: float
    thr_norm: float
    delay_norm: float
    penalty_b_coeff: float
    penalty_p_coeff: float
    earth_model: str = "spherical"
    motion: str = "orbit"
    project_power: bool = False
    normalize_obs: bool = True
    # per-satellite orbit description
    sat_start_unit: np.ndarray = field(default=None, repr=False)  # (N_s, 3) or flat (N_s, 2)
    sat_direction: np.ndarray = field(default=None, repr=False)  # (N_s, 3) or flat (N_s, 2)
    config_digest: str = ""

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def noise_power_w(self) -> float:
        return BOLTZMANN * self.noise_temp_k * self.bandwidth_hz

    @property
    def speed_mps(self) -> float:
        return 0.0 if self.motion == "static" else orbital_speed(self.orbit_altitude_m)

    @property
    def obs_dim(self) -> int:
        return self.n_cells + self.n_satellites * self.n_cells

    def slot_packets_per_mbps(self) -> float:
        """Packets per slot produced by a 1 Mbps stream."""
        return 1e6 * self.slot_duration_s / self.packet_bits

    def coverage_mask(self) -> np.ndarray:
        mask = np.zeros((self.n_satellites, self.n_cells), dtype=bool)
        for i, cells in enumerate(self.coverage_sets):
            mask[i, list(cells)] = True
        return mask


# ---------------------------------------------------------------------------
# configuration parsing

def load_config(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _section(cfg: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    sec = cfg.get(name)
    if not isinstance(sec, Mapping):
        raise SchemaError(f"missing section [{name}]")
    return sec


def _num(sec: Mapping[str, Any], key: str, where: str, default: Any = None) -> float:
    if key not in sec:
        if default is None:
            raise SchemaError(f"missing field {where}.{key}")
        return float(default)
    val = sec[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise SchemaError(f"{where}.{key} must be a number, got {type(val).__name__}")
    return float(val)


def _int(sec: Mapping[str, Any], key: str, where: str, default: Any = None) -> int:
    if key not in sec:
        if default is None:
            raise SchemaError(f"missing field {where}.{key}")
        return int(default)
    val = sec[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise SchemaError(f"{where}.{key} must be an integer, got {type(val).__name__}")
    return val


def _choice(sec: Mapping[str, Any], key: str, where: str, options: tuple[str, ...], default: str) -> str:
    val = sec.get(key, default)
    if val not in options:
        raise SchemaError(f"{where}.{key} must be one of {options}, got {val!r}")
    return val


def _bool(sec: Mapping[str, Any], key: str, where: str, default: bool) -> bool:
    val = sec.get(key, default)
    if not isinstance(val, bool):
        raise SchemaError(f"{where}.{key} must be a boolean")
    return val


def hex_grid(rows: int, cols: int, radius_m: float) -> np.ndarray:
    """Centres of a flat-top hexagonal patch, numbered column-major, centred on the origin.

    Neighbouring centres are sqrt(3)*radius apart.
    """
    pts = []
    dx = 1.5 * radius_m
    dy = math.sqrt(3.0) * radius_m
    for c in range(cols):
        for r in range(rows):
            pts.append((c * dx, r * dy + (dy / 2.0 if c % 2 else 0.0)))
    arr = np.asarray(pts, dtype=float)
    return arr - arr.mean(axis=0)


def _ground_to_sphere(offsets: np.ndarray) -> np.ndarray:
    # local east/north offsets around (lat 0, lon 0); east = +y, north = +z
    lat = offsets[:, 1] / R_EARTH
    lon = offsets[:, 0] / R_EARTH
    return np.stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=1)


def _cell_offsets(csec: Mapping[str, Any], radius_m: float) -> np.ndarray:
    if "positions_m" in csec:
        pos = csec["positions_m"]
        try:
            arr = np.asarray(pos, dtype=float)
        except (TypeError, ValueError) as exc:
            raise SchemaError("constellation.cells.positions_m must be a list of [east, north]") from exc
        if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) == 0:
            raise SchemaError("constellation.cells.positions_m must be a list of [east, north]")
        return arr
    rows = _int(csec, "hex_rows", "constellation.cells")
    cols = _int(csec, "hex_cols", "constellation.cells")
    if rows < 1 or cols < 1:
        raise InfeasibleError("hex grid needs at least one row and column")
    return hex_grid(rows, cols, radius_m)


def build_scenario(config: Mapping[str, Any]) -> Scenario:
    """Validate a parsed configuration mapping and build the immutable scenario."""
    con = _section(config, "constellation")
    link = _section(config, "link")
    traffic = _section(config, "traffic")
    episode = _section(config, "episode")

    K = _int(con, "beams_per_satellite", "constellation")
    H = _num(con, "orbit_altitude_m", "constellation")
    earth_model = _choice(con, "earth_model", "constellation", ("spherical", "flat"), "spherical")
    motion = _choice(con, "motion", "constellation", ("orbit", "static"), "orbit")

    csec = con.get("cells")
    if not isinstance(csec, Mapping):
        raise SchemaError("missing section [constellation.cells]")
    cell_radius = _num(csec, "radius_m", "constellation.cells", 14_000.0)
    offsets = _cell_offsets(csec, cell_radius)
    n_cells = len(offsets)

    sats = con.get("satellites")
    if not isinstance(sats, list) or not sats:
        raise SchemaError("missing [[constellation.satellites]] entries")
    n_sats = len(sats)
    if "n_satellites" in con and _int(con, "n_satellites", "constellation") != n_sats:
        raise InfeasibleError("constellation.n_satellites disagrees with the satellites list")

    if not (H > 0):
        raise InfeasibleError("orbit altitude must be positive")
    if K < 1:
        raise InfeasibleError(f"beams_per_satellite must be >= 1, got {K}")

    if earth_model == "spherical":
        cell_pos = R_EARTH * _ground_to_sphere(offsets)
    else:
        cell_pos = np.column_stack([offsets, np.zeros(n_cells)])

    starts, dirs, explicit_cov = [], [], []
    for idx, s in enumerate(sats):
        where = f"constellation.satellites[{idx}]"
        if not isinstance(s, Mapping):
            raise SchemaError(f"{where} must be a table")
        e0 = _num(s, "subpoint_east_m", where, 0.0)
        n0 = _num(s, "subpoint_north_m", where, 0.0)
        heading = math.radians(_num(s, "heading_deg", where, 0.0))
        if earth_model == "spherical":
            u0 = _ground_to_sphere(np.array([[e0, n0]]))[0]
            north = np.array([0.0, 0.0, 1.0]) - u0[2] * u0
            north /= np.linalg.norm(north)
            east = np.cross(north, u0)
            d0 = math.cos(heading) * north + math.sin(heading) * east
            starts.append(u0)
            dirs.append(d0 / np.linalg.norm(d0))
        else:
            starts.append(np.array([e0, n0]))
            dirs.append(np.array([math.sin(heading), math.cos(heading)]))
        cov = s.get("coverage")
        if cov is not None:
            if not isinstance(cov, list) or not all(isinstance(c, int) and not isinstance(c, bool) for c in cov):
                raise SchemaError(f"{where}.coverage must be a list of integer cell indices")
            if any(c < 0 or c >= n_cells for c in cov):
                raise InfeasibleError(f"{where}.coverage has an index outside 0..{n_cells - 1}")
        explicit_cov.append(cov)

    carrier = _num(link, "carrier_hz", "link")
    bandwidth = _num(link, "bandwidth_hz", "link")
    if "total_power_w" in link:
        p_tot = _num(link, "total_power_w", "link")
    else:
        p_tot = db_to_linear(_num(link, "total_power_dbw", "link"))
    # K = 1 cannot split P_tot in half and still use the full budget
    p_min = _num(link, "p_min_w", "link", p_tot / (4 * K))
    p_max = _num(link, "p_max_w", "link", p_tot / 2 if K >= 2 else p_tot)
    aperture = _num(link, "aperture_radius_m", "link")
    if "max_tx_gain_linear" in link:
        g_m = _num(link, "max_tx_gain_linear", "link")
    else:
        g_m = db_to_linear(_num(link, "max_tx_gain_dbi", "link"))
    g_r = db_to_linear(_num(link, "rx_gain_dbi", "link", 0.0))
    t_rx = _num(link, "noise_temp_k", "link")

    packet_bits = _num(traffic, "packet_bits", "traffic", 100_000.0)
    ttl = _int(traffic, "ttl_slots", "traffic", 50)
    capacity = _int(traffic, "queue_capacity_pkts", "traffic", 5000)
    fixed = traffic.get("rates_mbps")
    if fixed is not None:
        fixed_arr = np.asarray(fixed, dtype=float)
        if fixed_arr.shape != (n_cells,):
            raise SchemaError(f"traffic.rates_mbps must list {n_cells} rates")
        rate_lo = float(fixed_arr.min())
        rate_hi = float(fixed_arr.max())
    else:
        fixed_arr = None
        rate_lo = _num(traffic, "rate_min_mbps", "traffic")
        rate_hi = _num(traffic, "rate_max_mbps", "traffic")

    t_slot = _num(episode, "slot_duration_s", "episode")
    ep_slots = _int(episode, "episode_slots", "episode")
    alpha = _num(episode, "alpha", "episode", 0.5)
    c_b = _num(episode, "penalty_b_coeff", "episode", 0.005)
    c_p = _num(episode, "penalty_p_coeff", "episode", 0.005)
    project = _bool(episode, "project_power", "episode", False)
    normalize = _bool(episode, "normalize_obs", "episode", True)

    # invariants
    positives = {
        "carrier_hz": carrier, "bandwidth_hz": bandwidth, "total_power": p_tot,
        "aperture_radius_m": aperture, "max_tx_gain": g_m, "noise_temp_k": t_rx,
        "slot_duration_s": t_slot, "packet_bits": packet_bits, "cell radius": cell_radius,
    }
    for name, val in positives.items():
        if not (val > 0 and math.isfinite(val)):
            raise InfeasibleError(f"{name} must be strictly positive, got {val}")
    if ttl < 1 or capacity < 1 or ep_slots < 1:
        raise InfeasibleError("ttl_slots, queue_capacity_pkts and episode_slots must be >= 1")
    if not (0.0 <= alpha <= 1.0):
        raise InfeasibleError(f"alpha must lie in [0, 1], got {alpha}")
    if not (0 < p_min <= p_max <= p_tot):
        raise InfeasibleError(f"need 0 < P_min <= P_max <= P_tot, got {p_min}, {p_max}, {p_tot}")
    if K * p_min > p_tot:
        raise InfeasibleError("K * P_min exceeds P_tot")
    if rate_lo < 0 or rate_hi < rate_lo:
        raise InfeasibleError("traffic rates must satisfy 0 <= min <= max")

    # satellite geometry at slot 0, needed for coverage derivation
    r_orbit = R_EARTH + H
    coverage = []
    fov = con.get("fov_half_angle_deg")
    for i in range(n_sats):
        if explicit_cov[i] is not None:
            coverage.append(tuple(sorted(set(explicit_cov[i]))))
            continue
        if fov is None:
            raise SchemaError(
                f"constellation.satellites[{i}] has no coverage list and constellation.fov_half_angle_deg is unset")
        fov_rad = math.radians(_num(con, "fov_half_angle_deg", "constellation"))
        if earth_model == "spherical":
            pos = r_orbit * starts[i]
            bore = -starts[i]
        else:
            pos = np.array([starts[i][0], starts[i][1], H])
            bore = np.array([0.0, 0.0, -1.0])
        vec = cell_pos - pos
        cosang = (vec @ bore) / np.linalg.norm(vec, axis=1)
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        coverage.append(tuple(int(n) for n in np.flatnonzero(ang < fov_rad)))

    for i, cov in enumerate(coverage):
        if len(cov) < K:
            raise InfeasibleError(f"satellite {i} covers {len(cov)} cells, fewer than K={K}")
    covered = set().union(*coverage)
    if len(covered) != n_cells:
        missing = sorted(set(range(n_cells)) - covered)
        raise InfeasibleError(f"cells not covered by any satellite: {missing[:10]}")

    wavelength = SPEED_OF_LIGHT / carrier
    noise = BOLTZMANN * t_rx * bandwidth
    # interference-free nadir link at P_max
    sinr_ref = p_max * g_m * g_r * (wavelength / (4 * math.pi * H)) ** 2 / noise
    thr_norm = _num(episode, "thr_norm", "episode",
                    n_sats * K * bandwidth * math.log2(1 + sinr_ref) * t_slot)
    delay_norm = _num(episode, "delay_norm", "episode", float(ttl))
    if thr_norm <= 0 or delay_norm <= 0:
        raise InfeasibleError("normalization constants must be positive")

    def _frozen(a: np.ndarray) -> np.ndarray:
        a = np.array(a, dtype=float)
        a.setflags(write=False)
        return a

    digest = hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]
    return Scenario(
        n_satellites=n_sats, n_cells=n_cells, beams_per_satellite=K, orbit_altitude_m=H,
        carrier_hz=carrier, bandwidth_hz=bandwidth, total_power_w=p_tot, p_min_w=p_min, p_max_w=p_max,
        aperture_radius_m=aperture, max_tx_gain_linear=g_m, rx_gain_linear=g_r, noise_temp_k=t_rx,
        slot_duration_s=t_slot, packet_bits=packet_bits, ttl_slots=ttl, queue_capacity_pkts=capacity,
        cell_radius_m=cell_radius, cell_offsets_m=_frozen(offsets), cell_positions_m=_frozen(cell_pos),
        coverage_sets=tuple(coverage), rate_range_mbps=(rate_lo, rate_hi),
        fixed_rates_mbps=None if fixed_arr is None else _frozen(fixed_arr),
        episode_slots=ep_slots, alpha=alpha, thr_norm=thr_norm, delay_norm=delay_norm,
        penalty_b_coeff=c_b, penalty_p_coeff=c_p, earth_model=earth_model, motion=motion,
        project_power=project, normalize_obs=normalize,
        sat_start_unit=_frozen(np.array(starts)), sat_direction=_frozen(np.array(dirs)),
        config_digest=digest,
    )


def load_scenario(path: str | Path) -> Scenario:
    return build_scenario(load_config(path))


# ---------------------------------------------------------------------------
# geometry

def satellite_position(scn: Scenario, sat: int, slot: float) -> SatelliteState:
    """Satellite position and nadir boresight at a (possibly fractional) slot.

    Spherical mode advances the satellite along a great circle at the circular
    orbital rate; flat mode translates it at orbital speed at constant height.
    """
    if not 0 <= sat < scn.n_satellites:
        raise IndexError(f"satellite index {sat} out of range")
    if slot < 0:
        raise IndexError(f"slot {slot} is negative")
    t = slot * scn.slot_duration_s
    if scn.earth_model == "spherical":
        r = R_EARTH + scn.orbit_altitude_m
        angle = scn.speed_mps / r * t
        u = scn.sat_start_unit[sat] * math.cos(angle) + scn.sat_direction[sat] * math.sin(angle)
        return SatelliteState(position_ecef_m=r * u, boresight=-u)
    xy = scn.sat_start_unit[sat] + scn.sat_direction[sat] * scn.speed_mps * t
    return SatelliteState(position_ecef_m=np.array([xy[0], xy[1], scn.orbit_altitude_m]),
                          boresight=np.array([0.0, 0.0, -1.0]))


def slant_geometry(sat_state: SatelliteState, cell_pos: np.ndarray, flat: bool | None = None) -> tuple[float, float]:
    """Slant range (m) and boresight off-axis angle (rad) from a satellite to a cell.

    ``flat`` selects the local-up convention; by default it is inferred from the
    cell position (points near the origin are treated as flat-frame ground points).
    """
    cell_pos = np.asarray(cell_pos, dtype=float)
    vec = cell_pos - sat_state.position_ecef_m
    l = float(np.linalg.norm(vec))
    if flat is None:
        flat = np.linalg.norm(cell_pos) < 0.5 * R_EARTH
    up = np.array([0.0, 0.0, 1.0]) if flat else cell_pos / np.linalg.norm(cell_pos)
    sin_el = float(-vec @ up) / l
    if sin_el <= 0.0:
        raise HorizonError("cell is at or below the satellite's horizon")
    theta = math.atan2(float(np.linalg.norm(np.cross(vec, sat_state.boresight))),
                       float(vec @ sat_state.boresight))
    return l, theta


def geometry_arrays(scn: Scenario, slot: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised geometry for all (satellite, cell) pairs at one slot.

    Returns slant ranges (N_s, N_c), boresight off-axis angles (N_s, N_c),
    unit pointing vectors satellite->cell (N_s, N_c, 3) and a visibility mask.
    """
    flat = scn.earth_model == "flat"
    cells = scn.cell_positions_m
    if flat:
        up = np.broadcast_to(np.array([0.0, 0.0, 1.0]), cells.shape)
    else:
        up = cells / np.linalg.norm(cells, axis=1, keepdims=True)
    ranges = np.empty((scn.n_satellites, scn.n_cells))
    theta = np.empty_like(ranges)
    dirs = np.empty((scn.n_satellites, scn.n_cells, 3))
    visible = np.empty(ranges.shape, dtype=bool)
    for i in range(scn.n_satellites):
        st = satellite_position(scn, i, slot)
        vec = cells - st.position_ecef_m
        l = np.linalg.norm(vec, axis=1)
        unit = vec / l[:, None]
        ranges[i] = l
        dirs[i] = unit
        theta[i] = np.arctan2(np.linalg.norm(np.cross(unit, st.boresight), axis=1), unit @ st.boresight)
        visible[i] = np.einsum("ij,ij->i", -unit, up) > 0.0
    return ranges, theta, dirs, visible
