import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from satbeam.array_model import WeightMatrix, evaluate_beam
from satbeam.link_budget import (EARTH_RADIUS_M, GEO_ALTITUDE_M, K_BOLTZMANN, BeamPlan, LinkGeometry, PlannedBeam,
                                 SpectralTable, channel_gain, cinr, cinr_terms, demand_match,
                                 free_space_path_loss_db, load_scenario, offered_capacity, pattern_gain_dbi,
                                 slant_range, spectral_efficiency)

LAM = 299_792_458.0 / 19e9


def test_fspl_geo_19ghz():
    assert free_space_path_loss_db(35_786e3, LAM) == pytest.approx(209.1, abs=0.05)


def test_loss_factor_exact():
    a = channel_gain(LinkGeometry(excess_loss_db=0.0), 40.0)
    b = channel_gain(LinkGeometry(excess_loss_db=3.0), 40.0)
    assert b / a == pytest.approx(10 ** -0.3, rel=1e-12)


def test_inverse_square():
    a = channel_gain(LinkGeometry(slant_distance_m=1e7), 40.0)
    b = channel_gain(LinkGeometry(slant_distance_m=2e7), 40.0)
    assert 10 * math.log10(a / b) == pytest.approx(20 * math.log10(2), abs=1e-12)


def test_geometry_invariants():
    with pytest.raises(ValueError):
        LinkGeometry(slant_distance_m=0)
    with pytest.raises(ValueError):
        LinkGeometry(excess_loss_db=-1)
    with pytest.raises(ValueError):
        LinkGeometry(bandwidth_hz=0)


@given(st.floats(1e6, 1e8), st.floats(1e6, 1e8), st.floats(0, 10))
def test_gain_decreasing_in_distance_and_loss(d1, d2, loss):
    if d1 == d2:
        return
    lo, hi = sorted((d1, d2))
    assert channel_gain(LinkGeometry(slant_distance_m=lo), 30) > channel_gain(LinkGeometry(slant_distance_m=hi), 30)
    assert channel_gain(LinkGeometry(excess_loss_db=loss + 0.5), 30) < channel_gain(LinkGeometry(excess_loss_db=loss), 30)


@pytest.mark.parametrize("theta", [0.0, 3.0, 8.0])
def test_slant_range_geometry(theta):
    d = slant_range(theta)
    rs = EARTH_RADIUS_M + GEO_ALTITUDE_M
    t = math.radians(theta)
    # ground point = satellite + d * (direction tilted theta from nadir)
    px, py = d * math.sin(t), rs - d * math.cos(t)
    assert math.hypot(px, py) == pytest.approx(EARTH_RADIUS_M, rel=1e-12)
    if theta == 0:
        assert d == pytest.approx(GEO_ALTITUDE_M, rel=1e-12)


def test_slant_range_off_earth():
    with pytest.raises(ValueError):
        slant_range(9.0)


# --- CINR ------------------------------------------------------------------------

GAINS = {  # (serving beam, toward beam center) -> dBi
    (0, 0): 48.0, (1, 0): 20.0, (2, 0): 30.0,
    (0, 1): 19.0, (1, 1): 47.0, (2, 1): 25.0,
    (0, 2): 28.0, (1, 2): 26.0, (2, 2): 46.0,
}


def toy_plan():
    beams = [PlannedBeam(0.0, 0.0, 250e6, 1e9, color=0, tx_power_w=200.0, name="A"),
             PlannedBeam(1.5, 0.0, 250e6, 1e9, color=1, tx_power_w=150.0, name="B"),
             PlannedBeam(0.0, 2.0, 500e6, 1e9, color=0, tx_power_w=300.0, name="C")]
    return BeamPlan(beams, excess_loss_db=2.0, g_rx_max_dbi=35.0, rx_noise_temp_k=300.0)


def table_gain(plan):
    centers = [(b.center_az, b.center_el) for b in plan.beams]

    def g(beam, az, el):
        return GAINS[(plan.beams.index(beam), centers.index((az, el)))]
    return g


def hand_cinr_db(b):
    """Spreadsheet-style evaluation in dB, written independently of the library."""
    p_dbw = [10 * math.log10(200.0), 10 * math.log10(150.0), 10 * math.log10(300.0)]
    centers = [(0.0, 0.0), (1.5, 0.0), (0.0, 2.0)]
    colors = [0, 1, 0]
    bw = [250e6, 250e6, 500e6]
    az, el = centers[b]
    u = math.cos(math.radians(el)) * math.sin(math.radians(az))
    v = math.sin(math.radians(el))
    theta = math.asin(math.hypot(u, v))
    rs, re = 42_164_137.0, 6_378_137.0
    d = rs * math.cos(theta) - math.sqrt(re ** 2 - (rs * math.sin(theta)) ** 2)
    fspl_db = 20 * math.log10(4 * math.pi * d * 19e9 / 299_792_458.0)
    rx = 35.0 - fspl_db - 2.0
    c_db = p_dbw[b] + GAINS[(b, b)] + rx
    i_w = sum(10 ** ((p_dbw[j] + GAINS[(j, b)] + rx) / 10) for j in range(3) if j != b and colors[j] == colors[b])
    n_dbw = -228.5991672 + 10 * math.log10(300.0) + 10 * math.log10(bw[b])
    return c_db - 10 * math.log10(i_w + 10 ** (n_dbw / 10))


@pytest.mark.parametrize("b", [0, 1, 2])
def test_three_beam_cinr_matches_hand_calculation(b):
    plan = toy_plan()
    got = 10 * math.log10(cinr(plan, b, table_gain(plan)))
    assert got == pytest.approx(hand_cinr_db(b), abs=0.01)


def test_single_beam_cinr_equals_snr():
    plan = toy_plan()
    solo = BeamPlan([plan.beams[1]], excess_loss_db=2.0, g_rx_max_dbi=35.0)
    c, i, n = cinr_terms(solo, 0, table_gain(plan))
    assert i == 0.0
    assert cinr(solo, 0, table_gain(plan)) == c / n


def test_adding_cochannel_beam_lowers_cinr():
    plan = toy_plan()
    g = table_gain(plan)
    without = BeamPlan(plan.beams[:2], excess_loss_db=2.0, g_rx_max_dbi=35.0)
    assert cinr(plan, 0, g) < cinr(without, 0, g)


def test_cinr_nonincreasing_in_interferer_power():
    plan = toy_plan()
    g = table_gain(plan)
    base = cinr(plan, 0, g)
    plan.beams[2].tx_power_w *= 2
    assert cinr(plan, 0, g) < base


def test_empty_plan():
    with pytest.raises(ValueError):
        cinr(BeamPlan([]), 0)


def test_color_outside_palette():
    with pytest.raises(ValueError):
        BeamPlan([PlannedBeam(0, 0, 1e6, 1e6, color=5)], n_colors=4)


def test_default_gain_uses_array_pattern(cfg, all_on):
    # gain toward the steering direction equals the beam's directivity
    assert pattern_gain_dbi(cfg, all_on, 0.0, 0.0) == pytest.approx(evaluate_beam(cfg, all_on).directivity_dbi,
                                                                    abs=1e-9)
    plan = BeamPlan([PlannedBeam(0.0, 0.0, 500e6, 1e9, weights=all_on)], cfg=cfg)
    c, i, n = cinr_terms(plan, 0)
    geom = plan.geometry(plan.beams[0])
    assert c == pytest.approx(1296 * channel_gain(geom, pattern_gain_dbi(cfg, all_on, 0, 0)), rel=1e-12)
    assert n == pytest.approx(K_BOLTZMANN * 300 * 500e6, rel=1e-12)


# --- spectral efficiency / capacity --------------------------------------------------------

def test_spectral_efficiency_examples():
    assert spectral_efficiency(0.0) == 0.0
    assert spectral_efficiency(1.0) == pytest.approx(1.0, abs=1e-12)
    assert spectral_efficiency(1e9) == pytest.approx(5.9)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_spectral_efficiency_monotone_capped(a, b):
    lo, hi = sorted((a, b))
    assert spectral_efficiency(lo) <= spectral_efficiency(hi) <= 5.9


def test_spectral_table(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("gamma_db,kappa\n-2,0.5\n3,1.5\n10,3.0\n")
    t = SpectralTable.from_csv(p)
    assert spectral_efficiency(10 ** (-3 / 10), t) == 0.0
    assert spectral_efficiency(10 ** (5 / 10), t) == 1.5
    assert spectral_efficiency(10 ** (12 / 10), t) == 3.0


def test_non_monotone_table_rejected(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("gamma_db,kappa\n0,1.0\n5,0.8\n")
    with pytest.raises(ValueError):
        SpectralTable.from_csv(p)


def test_capacity_and_demand():
    assert offered_capacity(500e6, 2.0) == pytest.approx(1e9)
    assert demand_match(1e9, 1e9) == pytest.approx(100.0)
    assert demand_match(0.9e9, 1e9) == pytest.approx(90.0)
    with pytest.raises(ValueError):
        demand_match(1e9, 0)


@given(st.floats(1e3, 1e9), st.floats(0, 5.9), st.floats(1.1, 10))
def test_capacity_linear_in_bandwidth(w, k, s):
    assert offered_capacity(s * w, k) == pytest.approx(s * offered_capacity(w, k), rel=1e-12)


def test_scenario_file(tmp_path):
    p = tmp_path / "scn.csv"
    p.write_text("# two beams\n"
                 "name,center_az_deg,center_el_deg,demand_bps,bandwidth_hz,color,bw_az_deg,bw_el_deg,"
                 "sll_az_db,sll_el_db,eirp_dbw,n_elements\n"
                 "a,0,0,1e9,5e8,0,0.5,0.5,-20,-20,78,900\n"
                 "b,2,1,2e9,2.5e8,1,0.7,0.6,-18,-17,75,500\n")
    beams = load_scenario(p)
    assert [b.name for b in beams] == ["a", "b"]
    assert beams[1].spec.steer_az == 2.0 and beams[1].color == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("name,center_az_deg\na,0\n")
    with pytest.raises(ValueError):
        load_scenario(bad)
