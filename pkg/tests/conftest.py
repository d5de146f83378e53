import copy
from pathlib import Path

import pytest

from beamhop.scenario import build_scenario, load_config

ROOT = Path(__file__).resolve().parents[1]
DESK = ROOT / "configs" / "desk.toml"
FULL = ROOT / "configs" / "full.toml"

LINK = {
    "carrier_hz": 12.4e9,
    "bandwidth_hz": 100e6,
    "total_power_dbw": 39.0,
    "aperture_radius_m": 0.15,
    "max_tx_gain_dbi": 35.9,
    "rx_gain_dbi": 0.0,
    "noise_temp_k": 290.0,
}


def small_config(positions=((0.0, 0.0),), sats=None, K=1, earth_model="flat", motion="static",
                 rates=None, episode_slots=20, **episode):
    """A hand-sized scenario config; satellites default to one over the origin covering every cell."""
    n = len(positions)
    if sats is None:
        sats = [{"subpoint_east_m": 0.0, "subpoint_north_m": 0.0, "coverage": list(range(n))}]
    traffic = {"packet_bits": 100e3, "ttl_slots": 50, "queue_capacity_pkts": 5000}
    if rates is None:
        traffic.update(rate_min_mbps=30.0, rate_max_mbps=90.0)
    else:
        traffic["rates_mbps"] = list(rates)
    ep = {"slot_duration_s": 2e-3, "episode_slots": episode_slots, "alpha": 0.5}
    ep.update(episode)
    return {
        "constellation": {
            "beams_per_satellite": K,
            "orbit_altitude_m": 550e3,
            "earth_model": earth_model,
            "motion": motion,
            "cells": {"positions_m": [list(p) for p in positions], "radius_m": 14e3},
            "satellites": sats,
        },
        "link": dict(LINK),
        "traffic": traffic,
        "episode": ep,
    }


@pytest.fixture(scope="session")
def desk_config():
    return load_config(DESK)


@pytest.fixture(scope="session")
def desk(desk_config):
    return build_scenario(desk_config)


@pytest.fixture
def desk_config_copy(desk_config):
    return copy.deepcopy(desk_config)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
