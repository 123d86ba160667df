import csv
import json

import numpy as np
import pytest

from conftest import make_stub_design, monotone_s
from dnnborrow.data import CASE_STUDY_HISTORY, SIMULATION_HISTORY
from dnnborrow.errors import InvalidRange
from dnnborrow.simulation import (
    RESULT_COLUMNS,
    CaseStudyConfig,
    Scenario,
    case_study_scenarios,
    compare_power_preservation,
    mcse,
    naive_pooled_estimate,
    run_case_study,
    run_operating_characteristics,
    simulate_scenario_counts,
    write_manifest,
    write_results_csv,
)


def test_scenario_rejects_rates_outside_unit_interval():
    with pytest.raises(InvalidRange):
        Scenario((0.95, 0.3), (0.1, 0.0))
    with pytest.raises(InvalidRange):
        Scenario((0.0, 0.3))


def test_mcse():
    assert mcse(0.05, 10_000) == pytest.approx(np.sqrt(0.05 * 0.95 / 10_000))
    assert mcse(0.0, 100) == 0.0


def test_counts_use_per_replicate_streams():
    sc = Scenario((0.4, 0.3), (0.1, 0.1), 50)
    rc, rt = simulate_scenario_counts(sc, 150, 150, 1, 0)
    rc2, _ = simulate_scenario_counts(Scenario((0.4, 0.3), (0.1, 0.1), 80), 150, 150, 1, 0)
    np.testing.assert_array_equal(rc, rc2[:50])


def test_rates_and_invariants():
    design = make_stub_design(monotone_s, c1=0.9, c2=0.9, c12=0.9, f_p=lambda x: np.asarray(x) * 0.9 + 0.03)
    res = run_operating_characteristics(design, [Scenario((0.4, 0.3), (0.1, 0.1), 2000)], seed=0)[0]
    for p in (res.reject_h12_rate, res.reject_h1_rate, res.reject_h2_rate):
        assert 0 <= p <= 1
    assert res.reject_h12_rate >= max(res.reject_h1_rate, res.reject_h2_rate)
    for b, r in zip(res.bias, res.rmse):
        assert r**2 - b**2 >= -1e-12


def test_identity_posterior_mean_is_unbiased():
    design = make_stub_design(monotone_s)
    res = run_operating_characteristics(design, [Scenario((0.4, 0.3), replicates=4000)], seed=1)[0]
    np.testing.assert_allclose(res.bias, 0, atol=3 * 0.04 / np.sqrt(4000))
    np.testing.assert_allclose(res.rmse, [np.sqrt(0.4 * 0.6 / 150), np.sqrt(0.3 * 0.7 / 150)], rtol=0.05)


def test_null_rejection_matches_stub_probability():
    # S ~ U(0,1) independent of data, cutoff 0.95 on both endpoints
    rng = np.random.default_rng(0)
    design = make_stub_design(lambda x: rng.random((len(x), 2)), 0.95, 0.95, 0.95)
    res = run_operating_characteristics(design, [Scenario((0.4, 0.3), replicates=10_000)], seed=2)[0]
    assert abs(res.reject_h1_rate - 0.05) <= 3 * res.mcse_h1
    assert abs(res.reject_h12_rate - (1 - 0.95**2)) <= 3 * res.mcse_h12


def test_csv_and_manifest_are_reproducible(tmp_path):
    design = make_stub_design(monotone_s)
    scen = [Scenario((0.3, 0.2), replicates=1000, label="a"), Scenario((0.4, 0.3), (0.1, 0.1), 1000, "b")]
    paths = []
    for k in range(2):
        res = run_operating_characteristics(design, scen, seed=5)
        p = tmp_path / f"r{k}.csv"
        write_results_csv(res, p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    rows = list(csv.reader(open(paths[0])))
    assert tuple(rows[0]) == RESULT_COLUMNS and len(rows) == 3
    m = write_manifest(tmp_path / "m.json", 5, {"x": 1}, "fp", paths[0])
    assert json.loads((tmp_path / "m.json").read_text()) == m
    assert set(m) >= {"seed", "config_hash", "design_fingerprint"}


def test_empty_results_csv(tmp_path):
    write_results_csv([], tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().strip().split(",") == list(RESULT_COLUMNS)


def test_power_preservation_table():
    design = make_stub_design(monotone_s, c1=0.9, c2=0.9, c12=0.9)
    table = compare_power_preservation(design, 0.99, [Scenario((0.3, 0.2), (0.1, 0.1), 2000)], seed=0)
    row = table[0]
    assert row["surrogate"].reject_h12_rate >= row["constant"].reject_h12_rate
    assert row["constant"].mode == "constant_baseline"


def test_case_study_scenarios():
    cfg = CaseStudyConfig(design=None, scenarios={"S1": (0.7, 0.55), "S2": (0.9, 0.75)}, replicates=1000)
    scen = case_study_scenarios(cfg)
    assert len(scen) == 8
    assert scen[-1].label == "S2:0.09"


def test_run_case_study_shapes():
    design = make_stub_design(monotone_s, n=200)
    cfg = CaseStudyConfig(design, {"S3": (0.8, 0.65)}, (0.0, 0.05), 1000)
    res = run_case_study(cfg, seed=0)
    assert [r.scenario.effects for r in res] == [(0.0, 0.0), (0.05, 0.05)]
    assert all(np.all(np.isfinite(r.rmse)) for r in res)


def test_naive_pooled_estimate():
    est = naive_pooled_estimate(CASE_STUDY_HISTORY, [160, 130], 200)
    np.testing.assert_allclose(est[0], [(501 + 160) / 828, (406 + 130) / 828])
    est = naive_pooled_estimate(SIMULATION_HISTORY, [[0, 0], [150, 150]], 150)
    assert est.shape == (2, 2)
