import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from satbeam import dataset as D
from satbeam.array_model import ArrayConfig, WeightMatrix, evaluate_batch, evaluate_beam
from satbeam.ga import (GaParams, SamplerRanges, expand_quadrant, extract_quadrant, ga_optimize, generate_dataset,
                        initial_population)
from satbeam.objective import BeamSpec, CostWeights, cost

SMALL = GaParams(population_size=16, max_generations=8, convergence_patience=8, rng_seed=5)
SPEC = BeamSpec(0.7, 0.6, -16.0, -15.0, 74.0, 1.5, -2.0, 500)


@pytest.fixture(scope="module")
def small_run(cfg):
    return ga_optimize(SPEC, cfg, CostWeights(), SMALL)


def test_zero_quadrant():
    assert not expand_quadrant(np.zeros((18, 18))).any()


def test_corner_bit():
    q = np.zeros((18, 18), np.uint8)
    q[0, 0] = 1
    b = expand_quadrant(q)
    assert b.sum() == 4
    assert b[0, 0] == b[0, 35] == b[35, 0] == b[35, 35] == 1


def test_wrong_length():
    with pytest.raises(ValueError):
        expand_quadrant(np.zeros(323))
    with pytest.raises(ValueError):
        expand_quadrant(np.zeros((16, 16)), n_ports=36)


@given(st.lists(st.booleans(), min_size=324, max_size=324))
def test_round_trip_and_symmetry(bits):
    q = np.array(bits, np.uint8)
    full = expand_quadrant(q)
    assert np.array_equal(extract_quadrant(full), q)
    assert full.sum() == 4 * q.sum()
    assert np.array_equal(full, full[::-1]) and np.array_equal(full, full[:, ::-1])
    if q.any():
        WeightMatrix(full)  # constructor enforces symmetry


def test_batched_expand():
    q = np.random.default_rng(0).integers(0, 2, (3, 18, 18))
    assert np.array_equal(expand_quadrant(q)[1], expand_quadrant(q[1]))


def test_params_invariants():
    with pytest.raises(ValueError):
        GaParams(population_size=1)
    with pytest.raises(ValueError):
        GaParams(mutation_rate=1.5)
    with pytest.raises(ValueError):
        GaParams(elitism_count=65)
    with pytest.raises(ValueError):
        GaParams(init_strategy="random")


@pytest.mark.parametrize("strategy", ["taper", "mixed"])
def test_initial_population_shape(cfg, strategy):
    pop = initial_population(cfg, SPEC, GaParams(population_size=20, init_strategy=strategy))
    assert pop.shape == (20, 324) and pop.any(axis=1).all()


def test_best_cost_monotone(small_run):
    best = [h[1] for h in small_run.history]
    assert all(b <= a for a, b in zip(best, best[1:]))
    assert small_run.cost == best[-1]


def test_result_consistent_with_reevaluation(small_run, cfg):
    w = small_run.weights
    assert (w.steer_az, w.steer_el) == (SPEC.steer_az, SPEC.steer_el)
    m = evaluate_batch(cfg, w.bits, w.steer_az, w.steer_el)[0]
    assert float(cost(m[None], SPEC)[0]) == pytest.approx(small_run.cost, rel=1e-12)


def test_determinism(small_run, cfg):
    again = ga_optimize(SPEC, cfg, CostWeights(), SMALL)
    assert np.array_equal(again.weights.bits, small_run.weights.bits)
    assert again.cost == small_run.cost


def test_frozen_evolution(cfg):
    gp = GaParams(population_size=12, max_generations=4, crossover_rate=0, mutation_rate=0, elitism_count=12,
                  convergence_patience=10)
    res = ga_optimize(SPEC, cfg, CostWeights(), gp)
    assert len({h[1] for h in res.history}) == 1


def test_all_on_self_consistency(cfg, all_on):
    m = evaluate_beam(cfg, all_on)
    spec = BeamSpec(m.bw_az_deg, m.bw_el_deg, m.sll_az_db, m.sll_el_db, m.eirp_dbw, 0.0, 0.0, 1296)
    res = ga_optimize(spec, cfg, CostWeights(), SMALL)
    assert res.cost <= 0.05
    assert res.weights.n_active >= 0.9 * 1296


def test_infeasible_spec_flagged(cfg):
    # beamwidth far below the all-on limit together with a high EIRP is not reachable
    spec = BeamSpec(0.42, 0.42, -30.0, -30.0, 95.0, 0.0, 0.0, 1296)
    res = ga_optimize(spec, cfg, CostWeights(), SMALL)
    assert res.unconverged and res.cost > SMALL.accept_cost


def test_progress_log(cfg):
    buf = io.StringIO()
    ga_optimize(SPEC, cfg, CostWeights(), GaParams(population_size=8, max_generations=2), progress=buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "gen,best_cost,mean_cost,wall_s" and len(lines) == 4


def test_rejects_invalid_spec(cfg):
    with pytest.raises(ValueError):
        ga_optimize(BeamSpec(0.7, 0.6, -16, -15, 74, 9.5, 0.0), cfg, CostWeights(), SMALL)


# --- dataset factory ----------------------------------------------------------------------

TINY = GaParams(population_size=8, max_generations=3, convergence_patience=3)


@pytest.fixture(scope="module")
def tiny_ds(cfg):
    return generate_dataset(SamplerRanges(), 4, cfg, CostWeights(), TINY, rng_seed=9, quality_threshold=10.0)


def test_generated_metrics_match_regeneration(tiny_ds, cfg):
    for i in range(len(tiny_ds)):
        s = tiny_ds[i]
        w = WeightMatrix(expand_quadrant(s.quadrant_bits), s.spec.steer_az, s.spec.steer_el)
        m = evaluate_beam(cfg, w)
        a = s.achieved
        assert m.bw_az_deg == pytest.approx(a.bw_az_deg, abs=0.005)
        assert m.bw_el_deg == pytest.approx(a.bw_el_deg, abs=0.005)
        for x, y in ((m.sll_az_db, a.sll_az_db), (m.sll_el_db, a.sll_el_db)):
            assert (np.isnan(x) and np.isnan(y)) or x == pytest.approx(y, abs=0.2)
        assert m.eirp_dbw == pytest.approx(a.eirp_dbw, abs=0.1)


def test_generation_byte_identical(tiny_ds, cfg, tmp_path):
    again = generate_dataset(SamplerRanges(), 4, cfg, CostWeights(), TINY, rng_seed=9, quality_threshold=10.0)
    D.save_bin(tiny_ds, tmp_path / "a.bin")
    D.save_bin(again, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_specs_within_ranges(tiny_ds, cfg):
    r = SamplerRanges()
    f = tiny_ds.features
    assert np.all((f[:, 0] >= r.bw_az[0]) & (f[:, 0] <= r.bw_az[1]))
    assert np.all((f[:, 5] >= r.steer_az[0]) & (f[:, 5] <= r.steer_az[1]))
    assert np.all((f[:, 7] >= 4) & (f[:, 7] <= 1296))


def test_quality_gate_flags(cfg):
    ds = generate_dataset(SamplerRanges(), 2, cfg, CostWeights(), TINY, rng_seed=2, quality_threshold=10.0)
    assert ds.accepted.all()
    with pytest.raises(ValueError, match="quality gate"):
        generate_dataset(SamplerRanges(), 2, cfg, CostWeights(), TINY, rng_seed=2, quality_threshold=1e-9)


def test_single_sample(cfg):
    ds = generate_dataset(SamplerRanges(), 1, cfg, CostWeights(), TINY, rng_seed=4, quality_threshold=10.0)
    assert len(ds) == 1 and ds.n_accepted == 1


def test_invalid_ranges(cfg):
    with pytest.raises(ValueError):
        generate_dataset(SamplerRanges(bw_az=(0.2, 1.0)), 2, cfg)
    with pytest.raises(ValueError):
        generate_dataset(SamplerRanges(sll_az=(-40.0, -13.0)), 2, cfg)
    with pytest.raises(ValueError):
        generate_dataset(SamplerRanges(), 0, cfg)
