import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_stub_design, monotone_s
from dnnborrow.decision import DecisionMode, decide, decide_counts, plug_in_null_features, surrogate_vs_mcmc_report
from dnnborrow.errors import DesignMismatch
from dnnborrow.mcmc import McmcConfig
from dnnborrow.types import CurrentTrialObservation

OBS = CurrentTrialObservation(150, 150, (60, 45), (75, 60))


def test_plug_in_example():
    m1, m2, m12 = plug_in_null_features([60, 45], [75, 60], 150, 150)
    np.testing.assert_allclose(m1, [0.45, 0.30, 0.10])
    np.testing.assert_allclose(m2, [0.40, 0.10, 0.35])
    np.testing.assert_allclose(m12, [0.45, 0.35])


def test_plug_in_equal_arms_and_zeros():
    m1, m2, _ = plug_in_null_features([50, 40], [50, 40], 150, 150)
    assert m1[2] == 0 and m2[1] == 0
    for m in plug_in_null_features([0, 0], [0, 0], 150, 150):
        np.testing.assert_array_equal(m, 0)


def test_max_rule_example():
    design = make_stub_design(monotone_s, c1=0.95, c2=0.99, c12=0.97)
    out = decide(design, OBS)
    assert out.c_tilde == (0.97, 0.99)
    assert out.c_hat == (0.95, 0.99, 0.97)


def test_zero_s_never_rejects():
    design = make_stub_design(lambda x: np.zeros((len(x), 2)), c1=0.01, c2=0.01, c12=0.01)
    assert decide(design, OBS).rejected == (False, False)


def test_mismatched_sample_size():
    design = make_stub_design(monotone_s)
    with pytest.raises(DesignMismatch):
        decide(design, CurrentTrialObservation(120, 150, (60, 45), (75, 60)))
    with pytest.raises(DesignMismatch):
        decide(design, CurrentTrialObservation(150, 150, (60, 45, 1), (75, 60, 1)))


def test_constant_baseline_mode():
    design = make_stub_design(monotone_s, c_const=0.9)
    out = decide(design, OBS, "constant_baseline")
    assert out.c_tilde == (0.9, 0.9)
    assert out.rejected == tuple(s > 0.9 for s in out.s_hat)
    assert out.mode is DecisionMode.CONSTANT_BASELINE


def test_clamping_flags():
    design = make_stub_design(monotone_s)
    out = decide(design, CurrentTrialObservation(150, 150, (140, 45), (145, 60)))
    assert out.clamped["H12"] and out.clamped["H1"]
    assert not decide(design, OBS).clamped["H12"]


def test_outcome_json():
    out = decide(make_stub_design(monotone_s), OBS, fingerprint="abc")
    doc = json.loads(json.dumps(out.to_dict()))
    assert set(doc) == {"s_hat", "c_hat", "c_tilde", "rejected", "posterior_mean_hat", "mode", "clamped", "design_fingerprint"}
    assert doc["mode"] == "surrogate" and doc["design_fingerprint"] == "abc"


def test_batch_matches_single():
    design = make_stub_design(monotone_s, c1=lambda f: f[:, :1] * 0 + 0.9 + 0.1 * f[:, :1], c12=0.93)
    rng = np.random.default_rng(0)
    rc, rt = rng.integers(0, 151, (20, 2)), rng.integers(0, 151, (20, 2))
    b = decide_counts(design, rc, rt)
    for k in range(20):
        out = decide(design, CurrentTrialObservation(150, 150, tuple(rc[k]), tuple(rt[k])))
        np.testing.assert_array_equal(out.c_tilde, b.c_tilde[k])
        np.testing.assert_array_equal(out.rejected, b.rejected[k])


count = st.integers(0, 150)
level = st.floats(0.0, 1.0)


@settings(max_examples=300, deadline=None)
@given(rc1=count, rc2=count, rt1=count, rt2=count, c1=level, c2=level, c12=level, s1=level, s2=level)
def test_decision_invariants(rc1, rc2, rt1, rt2, c1, c2, c12, s1, s2):
    design = make_stub_design(lambda x: np.tile([s1, s2], (len(x), 1)), c1, c2, c12)
    out = decide(design, CurrentTrialObservation(150, 150, (rc1, rc2), (rt1, rt2)))
    assert out.c_tilde[0] == max(out.c_hat[0], out.c_hat[2])
    assert out.c_tilde[1] == max(out.c_hat[1], out.c_hat[2])
    for i in range(2):
        assert out.rejected[i] == (out.s_hat[i] > out.c_tilde[i])
        if out.rejected[i]:
            assert out.s_hat[i] > out.c_hat[2]


def smooth_critical(f):
    # depends on the null features; used to check the plumbing, not calibration
    return 0.9 + 0.08 * f[:, :1]


@settings(max_examples=100, deadline=None)
@given(rc1=count, rc2=count, rt2=count, c12=level)
def test_monotone_in_treatment_responders(rc1, rc2, rt2, c12):
    design = make_stub_design(monotone_s, c1=0.95, c2=smooth_critical, c12=c12)
    prev = False
    for rt1 in range(0, 151, 5):
        out = decide(design, CurrentTrialObservation(150, 150, (rc1, rc2), (rt1, rt2)))
        assert not (prev and not out.rejected[0])
        prev = out.rejected[0]


FAST = McmcConfig(burn_in=500, kept_draws_per_chain=1000, rhat_threshold=1.05, seed=3)


def test_fresh_mcmc_mode():
    design = make_stub_design(monotone_s, mcmc_cfg=FAST)
    out = decide(design, OBS, "fresh_mcmc")
    assert out.mode is DecisionMode.FRESH_MCMC
    assert all(0 <= s <= 1 for s in out.s_hat)
    assert out.rejected == tuple(s > c for s, c in zip(out.s_hat, out.c_tilde))
    # same observation and seed -> same reference answer
    assert decide(design, OBS, "fresh_mcmc").s_hat == out.s_hat


def test_surrogate_vs_mcmc_report():
    rep = surrogate_vs_mcmc_report(make_stub_design(monotone_s), OBS, FAST)
    div = np.array(rep["divergence"])
    assert np.all(np.isfinite(div)) and np.all((div >= 0) & (div <= 1))
    assert rep["mcmc_seconds"] > rep["surrogate_seconds"] > 0
