import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beamhop.channel import channel_matrix
from beamhop.linklayer import (
    BeamAssignment, NotServedError, apply_slot, beam_sinrs, capacity_bound, compute_sinr, rate,
)
from beamhop.queueing import QueueBank
from beamhop.scenario import build_scenario, satellite_position

from conftest import small_config
from oracles import K_B, literal_sinr


def assignment(scn, beams):
    rows = [[] for _ in range(scn.n_satellites)]
    for i, c, p in beams:
        rows[i].append((c, p))
    return BeamAssignment(tuple(tuple(r) for r in rows))


def sat_positions(scn, slot=0):
    return [satellite_position(scn, i, slot).position_ecef_m for i in range(scn.n_satellites)]


def test_noise_floor_hand_value(desk):
    assert desk.noise_power_w == pytest.approx(4.004e-13, rel=1e-3)
    assert 10 * math.log10(desk.noise_power_w) == pytest.approx(-123.97, abs=0.01)
    assert desk.noise_power_w == K_B * 290 * 100e6


def test_single_beam_snr_one(desk):
    H = channel_matrix(desk, 0)
    p = desk.noise_power_w / H.beam_gains[0, 3, 3]
    a = assignment(desk, [(0, 3, p)])
    assert compute_sinr(a, H, desk, 3) == pytest.approx(1.0, rel=1e-12)


def test_two_equal_cosatellite_beams():
    # two cells mirrored about the sub-satellite point receive each other's beam equally
    scn = build_scenario(small_config(positions=[(-10e3, 0.0), (10e3, 0.0)], K=2))
    H = channel_matrix(scn, 0)
    p = 10.0
    a = assignment(scn, [(0, 0, p), (0, 1, p)])
    ph = p * H.beam_gains[0, 0, 0]
    pi = p * H.beam_gains[0, 1, 0]
    sinr = compute_sinr(a, H, scn, 0)
    assert sinr == pytest.approx(ph / (scn.noise_power_w + pi), rel=1e-12)
    assert sinr < ph / scn.noise_power_w


def test_equal_signal_and_interference_below_one():
    scn = build_scenario(small_config(positions=[(0.0, 0.0), (0.0, 0.0)], K=2))
    H = channel_matrix(scn, 0)
    a = assignment(scn, [(0, 0, 5.0), (0, 1, 5.0)])
    ph = 5.0 * H.beam_gains[0, 0, 0]
    assert compute_sinr(a, H, scn, 0) == pytest.approx(ph / (scn.noise_power_w + ph), rel=1e-12)
    assert compute_sinr(a, H, scn, 0) < 1.0


def test_not_served(desk):
    H = channel_matrix(desk, 0)
    with pytest.raises(NotServedError):
        compute_sinr(assignment(desk, [(0, 1, 10.0)]), H, desk, 5)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: st.lists(
    st.tuples(st.integers(0, 1), st.integers(0, 5), st.floats(0.5, 4000.0)), min_size=n, max_size=n)))
def test_sinr_matches_literal_evaluation(desk, raw):
    # map the pick into each satellite's coverage set; drop same-satellite repeats
    beams, seen = [], set()
    for i, pick, p in raw:
        c = desk.coverage_sets[i][pick]
        if (i, c) not in seen:
            seen.add((i, c))
            beams.append((i, c, p))
    H = channel_matrix(desk, 0)
    a = assignment(desk, beams)
    pos = sat_positions(desk)
    for _, c, _ in beams:
        want = literal_sinr(desk, pos, beams, c)
        assert compute_sinr(a, H, desk, c) == pytest.approx(want, rel=1e-12)


def test_rate_values():
    assert rate(0.0, 100e6) == 0.0
    assert rate(1.0, 100e6) == pytest.approx(100e6)
    assert rate(3.0, 100e6) == pytest.approx(200e6)
    with pytest.raises(ValueError):
        rate(-0.5, 1.0)


def test_apply_slot_floor_budget():
    scn = build_scenario(small_config())
    H = channel_matrix(scn, 0)
    q = QueueBank(1, scn.ttl_slots, scn.queue_capacity_pkts)
    q.advance(np.array([10]))
    # choose power so that R T / o = 4.9
    target_bits = 4.9 * scn.packet_bits
    sinr = 2 ** (target_bits / scn.slot_duration_s / scn.bandwidth_hz) - 1
    p = sinr * scn.noise_power_w / H.beam_gains[0, 0, 0]
    rep = apply_slot(assignment(scn, [(0, 0, p)]), H, q, scn)
    assert rep.served_pkts.tolist() == [4]
    assert q.backlog.tolist() == [6]
    assert rep.served_bits[0] == pytest.approx(min(target_bits, 10 * scn.packet_bits), rel=1e-9)


def test_apply_slot_queue_limited():
    scn = build_scenario(small_config())
    H = channel_matrix(scn, 0)
    q = QueueBank(1, scn.ttl_slots, scn.queue_capacity_pkts)
    q.advance(np.array([2]))
    rep = apply_slot(assignment(scn, [(0, 0, 1000.0)]), H, q, scn)
    assert rep.served_bits[0] == 2 * scn.packet_bits
    assert rep.served_pkts[0] == 2


def test_apply_slot_dark_cell(desk):
    H = channel_matrix(desk, 0)
    q = QueueBank(desk.n_cells, desk.ttl_slots, desk.queue_capacity_pkts)
    q.advance(np.full(desk.n_cells, 5))
    rep = apply_slot(assignment(desk, [(0, 1, 100.0)]), H, q, desk)
    assert rep.kappa[7] == 0 and rep.served_bits[7] == 0.0 and rep.serving_sat[7] == -1
    assert rep.kappa[1] == 1


def test_multi_coverage_served_by_best_beam(desk):
    H = channel_matrix(desk, 0)
    q = QueueBank(desk.n_cells, desk.ttl_slots, desk.queue_capacity_pkts)
    a = assignment(desk, [(0, 3, 50.0), (1, 3, 1500.0)])
    rep = apply_slot(a, H, q, desk)
    _, _, _, sinr = beam_sinrs(a, H, desk)
    assert rep.serving_sat[3] == int(np.argmax(sinr))
    assert rep.sinr[3] == sinr.max()


def test_from_pattern_drops_same_satellite_repeat():
    a = BeamAssignment.from_pattern(np.array([[2, 2], [2, 4]]), np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert a.beams == (((2, 1.0),), ((2, 3.0), (4, 4.0)))


def test_validate(desk):
    with pytest.raises(ValueError):
        assignment(desk, [(0, 7, 10.0)]).validate(desk)
    with pytest.raises(ValueError):
        assignment(desk, [(0, 1, 10.0), (0, 2, 10.0), (0, 3, 10.0)]).validate(desk)
    assignment(desk, [(0, 1, 10.0), (1, 7, 20.0)]).validate(desk)


def test_indicator(desk):
    x, p = assignment(desk, [(0, 1, 10.0), (1, 7, 20.0)]).indicator(desk)
    assert x.sum() == 2 and x[0, 1] == 1 and x[1, 7] == 1
    assert p[1, 7] == 20.0


beam_lists = st.lists(st.tuples(st.integers(0, 1), st.integers(0, 5), st.floats(1.0, 3000.0)),
                      min_size=1, max_size=4)


def _dedup(desk, raw):
    out, seen = [], set()
    for i, pick, p in raw:
        c = desk.coverage_sets[i][pick]
        if (i, c) not in seen and len([b for b in out if b[0] == i]) < desk.beams_per_satellite:
            seen.add((i, c))
            out.append((i, c, p))
    return out


def sinr_by_beam(scn, beams, H):
    sats, cells, _, sinr = beam_sinrs(assignment(scn, beams), H, scn)
    return {(int(i), int(c)): float(v) for i, c, v in zip(sats, cells, sinr)}


@settings(max_examples=100, deadline=None)
@given(beam_lists, st.floats(1.01, 5.0))
def test_power_monotonicity(desk, raw, factor):
    beams = _dedup(desk, raw)
    H = channel_matrix(desk, 0)
    i, c, p = beams[0]
    before = sinr_by_beam(desk, beams, H)[(i, c)]
    after = sinr_by_beam(desk, [(i, c, p * factor)] + beams[1:], H)[(i, c)]
    assert after >= before


@settings(max_examples=100, deadline=None)
@given(beam_lists, st.integers(0, 1), st.integers(0, 5), st.floats(1.0, 3000.0))
def test_extra_interferer_never_helps(desk, raw, i, pick, p):
    beams = _dedup(desk, raw)
    c = desk.coverage_sets[i][pick]
    if (i, c) in {(b[0], b[1]) for b in beams}:
        return
    H = channel_matrix(desk, 0)
    before = sinr_by_beam(desk, beams, H)
    after = sinr_by_beam(desk, beams + [(i, c, p)], H)
    for key, v in before.items():
        assert after[key] <= v


@settings(max_examples=50, deadline=None)
@given(beam_lists)
def test_capacity_bound(desk, raw):
    beams = _dedup(desk, raw)
    H = channel_matrix(desk, 0)
    q = QueueBank(desk.n_cells, desk.ttl_slots, desk.queue_capacity_pkts)
    q.advance(np.full(desk.n_cells, 4000))
    rep = apply_slot(assignment(desk, beams), H, q, desk)
    sinr_max = desk.p_max_w * H.beam_gains.max() / desk.noise_power_w
    assert rep.served_bits.sum() <= capacity_bound(desk, max(sinr_max, rep.sinr.max()))
    assert np.all(rep.served_bits <= rep.rate_bps * desk.slot_duration_s + 1e-9)
