import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnnborrow.data import CASE_STUDY_HISTORY, SIMULATION_HISTORY
from dnnborrow.types import (
    CurrentTrialObservation,
    EndpointConfig,
    HierPriorConfig,
    HistoricalDataset,
    ParameterSpaces,
    SchemaError,
    empirical_rates,
    validate_dataset,
)

OBS = CurrentTrialObservation(150, 150, (60, 45), (75, 60))


def test_table1_history_validates():
    report = validate_dataset(SIMULATION_HISTORY, OBS, EndpointConfig())
    assert report.ok, report.violations
    np.testing.assert_array_equal(SIMULATION_HISTORY.n, [100, 100, 200, 200, 300, 300])
    np.testing.assert_array_equal(SIMULATION_HISTORY.r[:, 0], [33, 41, 78, 81, 115, 113])
    np.testing.assert_array_equal(SIMULATION_HISTORY.r[:, 1], [31, 28, 69, 68, 94, 97])


def test_case_study_history_validates():
    cur = CurrentTrialObservation(200, 200, (160, 130), (170, 140))
    assert validate_dataset(CASE_STUDY_HISTORY, cur, EndpointConfig()).ok


def test_boundary_responders_equal_n_pass():
    hist = HistoricalDataset.from_arrays([10, 20], [[10, 3], [0, 20]])
    assert validate_dataset(hist, OBS, EndpointConfig()).ok


def test_responders_above_n_fail():
    hist = HistoricalDataset.from_arrays([10, 20], [[11, 3], [0, 20]])
    report = validate_dataset(hist, OBS, EndpointConfig())
    assert not report.ok
    assert any("responders exceed sample size" in v for v in report.violations)


def test_observation_above_n_fails():
    bad = CurrentTrialObservation(150, 150, (151, 45), (75, 60))
    report = validate_dataset(SIMULATION_HISTORY, bad, EndpointConfig())
    assert any("responders exceed sample size" in v for v in report.violations)


def test_dimension_mismatch_is_reported():
    cur = CurrentTrialObservation(150, 150, (60, 45, 3), (75, 60, 3))
    report = validate_dataset(SIMULATION_HISTORY, cur, EndpointConfig())
    assert any("dimensions disagree" in v for v in report.violations)


def test_empirical_rates_examples():
    rc, rt = empirical_rates(OBS)
    np.testing.assert_allclose(rc, [0.4, 0.3])
    np.testing.assert_allclose(rt, [0.5, 0.4])
    # per-endpoint (control, treatment) pairs
    np.testing.assert_allclose(np.array([rc, rt]).T, [[0.4, 0.5], [0.3, 0.4]])
    rc, _ = empirical_rates(CurrentTrialObservation(150, 150, (0, 0), (1, 1)))
    np.testing.assert_array_equal(rc, [0, 0])
    rc, _ = empirical_rates(CurrentTrialObservation(200, 200, (160, 130), (1, 1)))
    np.testing.assert_allclose(rc, [0.8, 0.65])


@pytest.mark.parametrize(
    "obj",
    [
        EndpointConfig(),
        EndpointConfig(3, (0.0, 0.05, 0.1), ((1, 1), (0.5, 0.5), (2, 3)), 0.1),
        SIMULATION_HISTORY,
        CASE_STUDY_HISTORY,
        OBS,
        ParameterSpaces(),
        HierPriorConfig.default(2),
        HierPriorConfig.default(3),
    ],
)
def test_json_round_trip(obj):
    doc = json.loads(json.dumps(obj.to_dict()))
    assert type(obj).from_dict(doc) == obj


@pytest.mark.parametrize("cls", [EndpointConfig, HistoricalDataset, CurrentTrialObservation, ParameterSpaces, HierPriorConfig])
def test_unknown_field_and_version_rejected(cls):
    default = {
        HistoricalDataset: SIMULATION_HISTORY,
        CurrentTrialObservation: OBS,
    }.get(cls) or cls()
    doc = default.to_dict()
    with pytest.raises(SchemaError):
        cls.from_dict(dict(doc, surprise=1))
    with pytest.raises(SchemaError):
        cls.from_dict(dict(doc, schema_version=99))


def test_fractional_counts_rejected():
    doc = OBS.to_dict()
    doc["r_control"] = [60.5, 45]
    with pytest.raises(SchemaError):
        CurrentTrialObservation.from_dict(doc)


def test_prior_violations():
    assert HierPriorConfig.default().violations() == []
    assert HierPriorConfig(0.01, ((1.0, 2.0), (2.0, 1.0)), 3.0).violations()
    assert HierPriorConfig(-1.0).violations()


counts = st.integers(-5, 400)


@settings(max_examples=200, deadline=None)
@given(
    n=st.lists(st.integers(-3, 300), min_size=1, max_size=5),
    r=st.lists(st.lists(counts, min_size=0, max_size=6), min_size=0, max_size=3),
    nc=st.integers(-2, 300),
    nt=st.integers(-2, 300),
    rc=st.lists(counts, max_size=3),
    rt=st.lists(counts, max_size=3),
    k=st.integers(0, 4),
)
def test_validate_dataset_is_total(n, r, nc, nt, rc, rt, k):
    try:
        hist = HistoricalDataset.from_arrays(n, r)
    except Exception:
        hist = HistoricalDataset(())
    cur = CurrentTrialObservation(nc, nt, tuple(rc), tuple(rt))
    report = validate_dataset(hist, cur, EndpointConfig(endpoint_count=k))
    assert isinstance(report.violations, tuple)


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(1, 500),
    data=st.data(),
)
def test_empirical_rates_in_unit_interval(n, data):
    r = tuple(data.draw(st.integers(0, n)) for _ in range(4))
    rc, rt = empirical_rates(CurrentTrialObservation(n, n, r[:2], r[2:]))
    assert np.all((rc >= 0) & (rc <= 1)) and np.all((rt >= 0) & (rt <= 1))
