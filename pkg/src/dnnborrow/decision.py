"""Per-endpoint decisions from a trained design.

Null features are plugged in from the observed counts (pooling both arms on
the endpoint assumed null), the critical-value networks are evaluated there,
and endpoint ``i`` is rejected when ``S_i > max(c_i, c_12)``.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .calibration import NullHypothesisKind, as_callable
from .errors import DesignMismatch
from .mcmc import McmcConfig, posterior_mean_control, posterior_prob_S, sample_posterior
from .surrogate import surrogate_features
from .types import CurrentTrialObservation


class DecisionMode(str, enum.Enum):
    SURROGATE = "surrogate"
    CONSTANT_BASELINE = "constant_baseline"
    FRESH_MCMC = "fresh_mcmc"


def plug_in_null_features(r_control, r_treatment, n_control: int, n_treatment: int):
    """``(M1, M2, M12)`` null feature rows from counts of shape ``(..., 2)``."""
    rc = np.asarray(r_control, dtype=float)
    rt = np.asarray(r_treatment, dtype=float)
    pooled = (rc + rt) / (n_control + n_treatment)
    pc = rc / n_control
    delta = rt / n_treatment - pc
    m1 = np.stack([pooled[..., 0], pc[..., 1], delta[..., 1]], axis=-1)
    m2 = np.stack([pc[..., 0], delta[..., 0], pooled[..., 1]], axis=-1)
    return m1, m2, pooled


def plug_in_for(cur: CurrentTrialObservation):
    return plug_in_null_features(cur.r_control, cur.r_treatment, cur.n_control, cur.n_treatment)


@dataclass
class BatchDecision:
    s_hat: np.ndarray
    c_hat: np.ndarray
    c_tilde: np.ndarray
    rejected: np.ndarray
    posterior_mean_hat: np.ndarray
    clamped: np.ndarray


def decide_counts(design, r_control, r_treatment, mode: DecisionMode | str = DecisionMode.SURROGATE) -> BatchDecision:
    """Vectorized decisions for count arrays of shape ``(N, 2)`` (surrogate or constant mode)."""
    mode = DecisionMode(mode)
    rc = np.atleast_2d(np.asarray(r_control))
    rt = np.atleast_2d(np.asarray(r_treatment))
    nc, nt = design.n_control, design.n_treatment
    x = surrogate_features(rc, rt, nc, nt)
    s_hat = np.asarray(as_callable(design.f_s)(x), dtype=float)
    mean_hat = np.asarray(as_callable(design.f_p)(x[:, : rc.shape[1]]), dtype=float)
    n = rc.shape[0]
    if mode is DecisionMode.CONSTANT_BASELINE:
        if design.c_const is None:
            raise ValueError("design has no constant cutoff")
        c_hat = np.full((n, 3), float(design.c_const))
        c_tilde = np.full((n, 2), float(design.c_const))
        clamped = np.zeros((n, 3), dtype=bool)
    elif mode is DecisionMode.SURROGATE:
        if design.critical is None:
            raise ValueError("design has no critical-value networks")
        feats = plug_in_null_features(rc, rt, nc, nt)
        c_hat = np.empty((n, 3))
        clamped = np.empty((n, 3), dtype=bool)
        for k, (kind, f) in enumerate(zip(NullHypothesisKind, feats)):
            c_hat[:, k], clamped[:, k] = design.critical.predict(kind, f)
        c_tilde = np.maximum(c_hat[:, :2], c_hat[:, 2:3])
    else:
        raise ValueError("fresh_mcmc decisions go through decide()")
    return BatchDecision(s_hat, c_hat, c_tilde, s_hat > c_tilde, mean_hat, clamped)


@dataclass
class DecisionOutcome:
    s_hat: tuple[float, float]
    c_hat: tuple[float, float, float]
    c_tilde: tuple[float, float]
    rejected: tuple[bool, bool]
    posterior_mean_hat: tuple[float, float]
    mode: DecisionMode
    clamped: dict = field(default_factory=dict)
    fingerprint: str | None = None

    def to_dict(self) -> dict:
        return {
            "s_hat": list(self.s_hat),
            "c_hat": list(self.c_hat),
            "c_tilde": list(self.c_tilde),
            "rejected": list(self.rejected),
            "posterior_mean_hat": list(self.posterior_mean_hat),
            "mode": self.mode.value,
            "clamped": dict(self.clamped),
            "design_fingerprint": self.fingerprint,
        }


def _check_match(design, cur: CurrentTrialObservation) -> None:
    if (cur.n_control, cur.n_treatment) != (design.n_control, design.n_treatment):
        raise DesignMismatch(
            f"observation sample sizes ({cur.n_control}, {cur.n_treatment}) differ from the design's "
            f"({design.n_control}, {design.n_treatment})"
        )
    if cur.endpoint_count != design.endpoint_cfg.endpoint_count:
        raise DesignMismatch("observation endpoint count differs from the design's")


def _fresh_s(design, cur: CurrentTrialObservation, mcmc_cfg: McmcConfig | None):
    draws = sample_posterior(design.history, cur, design.prior, design.endpoint_cfg, mcmc_cfg or design.mcmc_cfg)
    s = posterior_prob_S(draws.control_draws, draws.treatment_draws, design.endpoint_cfg.promise_margins)
    return s, posterior_mean_control(draws.control_draws)


def decide(
    design,
    cur: CurrentTrialObservation,
    mode: DecisionMode | str = DecisionMode.SURROGATE,
    mcmc_cfg: McmcConfig | None = None,
    fingerprint: str | None = None,
) -> DecisionOutcome:
    """Reject or not per endpoint; ``fresh_mcmc`` replaces the surrogate ``S`` with MCMC."""
    mode = DecisionMode(mode)
    _check_match(design, cur)
    base = DecisionMode.SURROGATE if mode is DecisionMode.FRESH_MCMC else mode
    b = decide_counts(design, [cur.r_control], [cur.r_treatment], base)
    s_hat, mean_hat, c_tilde = b.s_hat[0], b.posterior_mean_hat[0], b.c_tilde[0]
    if mode is DecisionMode.FRESH_MCMC:
        s_hat, mean_hat = _fresh_s(design, cur, mcmc_cfg)
    rejected = s_hat > c_tilde
    return DecisionOutcome(
        s_hat=tuple(float(v) for v in s_hat),
        c_hat=tuple(float(v) for v in b.c_hat[0]),
        c_tilde=tuple(float(v) for v in c_tilde),
        rejected=tuple(bool(v) for v in rejected),
        posterior_mean_hat=tuple(float(v) for v in mean_hat),
        mode=mode,
        clamped={k.value: bool(f) for k, f in zip(NullHypothesisKind, b.clamped[0])},
        fingerprint=fingerprint,
    )


def surrogate_vs_mcmc_report(design, cur: CurrentTrialObservation, mcmc_cfg: McmcConfig | None = None) -> dict:
    """Absolute difference between surrogate and MCMC promise probabilities, with timings."""
    _check_match(design, cur)
    t0 = time.perf_counter()
    x = surrogate_features([cur.r_control], [cur.r_treatment], cur.n_control, cur.n_treatment)
    s_hat = np.asarray(as_callable(design.f_s)(x), dtype=float)[0]
    t1 = time.perf_counter()
    s_mcmc, _ = _fresh_s(design, cur, mcmc_cfg)
    t2 = time.perf_counter()
    return {
        "observation": cur.to_dict(),
        "s_hat": s_hat.tolist(),
        "s_mcmc": np.asarray(s_mcmc).tolist(),
        "divergence": np.abs(s_hat - s_mcmc).tolist(),
        "surrogate_seconds": t1 - t0,
        "mcmc_seconds": t2 - t1,
    }
