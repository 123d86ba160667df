"""Simulated training data and posterior surrogates.

Each training example draws true rates from a scenario pattern, simulates
current-trial binomial counts, runs the hierarchical sampler on the control
arm and the conjugate beta posterior on the treatment arm, and records

* features: responder fractions ``(rc1/nc, rc2/nc, rt1/nt, rt2/nt)``,
* ``label_S``: Monte Carlo promise probabilities,
* ``label_P``: posterior means of the current control rates.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InvalidRange, TooManyExclusions
from .mcmc import McmcConfig, posterior_mean_control, posterior_prob_S, sample_hier_batch
from .mlp import MlpModel, MlpSpec, TrainConfig, cross_validate, fit
from .rng import stream
from .types import EndpointConfig, HierPriorConfig, HistoricalDataset, ParameterSpaces

log = logging.getLogger(__name__)

MAX_EXCLUDED_FRACTION = 0.01


@dataclass(frozen=True)
class ScenarioPattern:
    """Uniform box for control rates and effects; ``(0, 0)`` pins an effect at zero."""

    control_ranges: tuple[tuple[float, float], ...]
    effect_ranges: tuple[tuple[float, float], ...]

    def check(self) -> None:
        if len(self.control_ranges) != len(self.effect_ranges):
            raise InvalidRange("control and effect ranges differ in length")
        for (clo, chi), (dlo, dhi) in zip(self.control_ranges, self.effect_ranges):
            if not (0.0 < clo <= chi < 1.0) or dlo > dhi:
                raise InvalidRange(f"bad interval ({clo}, {chi}) / ({dlo}, {dhi})")
            if clo + dlo < 0.0 or chi + dhi > 1.0:
                raise InvalidRange(
                    f"treatment range ({clo + dlo:.3g}, {chi + dhi:.3g}) leaves (0, 1)"
                )


def training_patterns(spaces: ParameterSpaces) -> list[ScenarioPattern]:
    """Four equally weighted patterns: no effect, effect on 1, on 2, on both."""
    ctrl = tuple(spaces.control_space)
    e1, e2 = spaces.effect_space
    zero = (0.0, 0.0)
    return [
        ScenarioPattern(ctrl, (zero, zero)),
        ScenarioPattern(ctrl, (e1, zero)),
        ScenarioPattern(ctrl, (zero, e2)),
        ScenarioPattern(ctrl, (e1, e2)),
    ]


def draw_scenarios(patterns: Sequence[ScenarioPattern], B: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """``B`` rate tuples ``(psi_c..., psi_t...)`` with ``B / len(patterns)`` per pattern.

    Returns ``(rates, pattern_ids)``.
    """
    if not patterns or B % len(patterns):
        raise ValueError(f"B={B} is not divisible by the {len(patterns)} patterns")
    per = B // len(patterns)
    rates, ids = [], []
    for p, pat in enumerate(patterns):
        pat.check()
        rng = stream(seed, "scenario", p)
        lo_c, hi_c = np.array(pat.control_ranges).T
        lo_d, hi_d = np.array(pat.effect_ranges).T
        ctrl = lo_c + (hi_c - lo_c) * rng.random((per, lo_c.size))
        eff = lo_d + (hi_d - lo_d) * rng.random((per, lo_d.size))
        rates.append(np.hstack([ctrl, ctrl + eff]))
        ids.append(np.full(per, p))
    return np.vstack(rates), np.concatenate(ids)


def simulate_counts(rates: np.ndarray, n_control: int, n_treatment: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Binomial responder counts for ``(..., 2I)`` rate rows (control first)."""
    dim = rates.shape[-1] // 2
    rc = rng.binomial(n_control, rates[..., :dim])
    rt = rng.binomial(n_treatment, rates[..., dim:])
    return rc, rt


@dataclass
class TrainingSet:
    example_id: np.ndarray
    pattern_id: np.ndarray
    truth: np.ndarray
    features: np.ndarray
    label_S: np.ndarray
    label_P: np.ndarray
    excluded: list = field(default_factory=list)

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, idx) -> "TrainingSet":
        return TrainingSet(
            self.example_id[idx],
            self.pattern_id[idx],
            self.truth[idx],
            self.features[idx],
            self.label_S[idx],
            self.label_P[idx],
            list(self.excluded),
        )

    def to_csv(self, path) -> None:
        dim = self.features.shape[1] // 2
        header = ["example_id", "pattern_id"]
        header += [f"psi_c{i + 1}" for i in range(dim)] + [f"psi_t{i + 1}" for i in range(dim)]
        header += [f"frac_c{i + 1}" for i in range(dim)] + [f"frac_t{i + 1}" for i in range(dim)]
        header += [f"label_S{i + 1}" for i in range(dim)] + [f"label_P{i + 1}" for i in range(dim)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for b in range(len(self)):
                row = [int(self.example_id[b]), int(self.pattern_id[b])]
                for arr in (self.truth, self.features, self.label_S, self.label_P):
                    row += [repr(float(v)) for v in arr[b]]
                w.writerow(row)

    @classmethod
    def read_csv(cls, path) -> "TrainingSet":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        dim = sum(h.startswith("label_S") for h in header)
        a = np.array(body, dtype=float).reshape(len(body), len(header))
        c = 2
        cut = [c, c + 2 * dim, c + 4 * dim, c + 5 * dim, c + 6 * dim]
        return cls(
            a[:, 0].astype(int),
            a[:, 1].astype(int),
            a[:, cut[0] : cut[1]],
            a[:, cut[1] : cut[2]],
            a[:, cut[2] : cut[3]],
            a[:, cut[3] : cut[4]],
        )


def _label_chunk(args):
    (hist, n_control, n_treatment, rates, ids, prior, mcmc_cfg, endpoint_cfg, seed) = args
    dim = rates.shape[1] // 2
    rc = np.empty((len(ids), dim), dtype=np.int64)
    rt = np.empty((len(ids), dim), dtype=np.int64)
    for k, b in enumerate(ids):
        rc[k], rt[k] = simulate_counts(rates[k], n_control, n_treatment, stream(seed, "binomial", int(b)))
    draws = sample_hier_batch(hist, rc, n_control, prior, mcmc_cfg, seed, ids)
    out = []
    for k, b in enumerate(ids):
        d = draws[k]
        if isinstance(d, Exception):
            out.append((int(b), None, None, None, str(d)))
            continue
        beta_rng = stream(seed, "beta", int(b))
        t = np.column_stack(
            [
                beta_rng.beta(a + r, bb + n_treatment - r, size=d.n_draws)
                for r, (a, bb) in zip(rt[k], endpoint_cfg.treatment_prior)
            ]
        )
        feats = np.concatenate([rc[k] / n_control, rt[k] / n_treatment])
        s = posterior_prob_S(d.control_draws, t, endpoint_cfg.promise_margins)
        p = posterior_mean_control(d.control_draws)
        out.append((int(b), feats, s, p, None))
    return out


def generate_training_set(
    hist: HistoricalDataset,
    n_control: int,
    n_treatment: int,
    scenarios: np.ndarray,
    prior: HierPriorConfig,
    mcmc_cfg: McmcConfig,
    endpoint_cfg: EndpointConfig,
    seed: int,
    pattern_ids: np.ndarray | None = None,
    chunk_size: int = 64,
    workers: int = 1,
    progress=None,
) -> TrainingSet:
    """Label every scenario row by simulation plus MCMC.

    Example ``b`` uses streams keyed by ``(seed, b)``, so chunking and worker
    count do not change any label. Examples whose sampler does not converge
    are dropped; more than 1% dropped raises :class:`TooManyExclusions`.
    """
    scenarios = np.asarray(scenarios, dtype=float)
    B = scenarios.shape[0]
    if pattern_ids is None:
        pattern_ids = np.zeros(B, dtype=int)
    chunks = [np.arange(s, min(s + chunk_size, B)) for s in range(0, B, chunk_size)]
    jobs = [
        (hist, n_control, n_treatment, scenarios[c], c, prior, mcmc_cfg, endpoint_cfg, seed) for c in chunks
    ]
    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for done, res in enumerate(pool.map(_label_chunk, jobs)):
                results.extend(res)
                if progress:
                    progress(done + 1, len(jobs))
    else:
        for done, job in enumerate(jobs):
            results.extend(_label_chunk(job))
            if progress:
                progress(done + 1, len(jobs))
    results.sort(key=lambda r: r[0])
    kept = [r for r in results if r[4] is None]
    excluded = [(r[0], r[4]) for r in results if r[4] is not None]
    if excluded:
        log.warning("excluded %d of %d examples for non-convergence", len(excluded), B)
    if len(excluded) > MAX_EXCLUDED_FRACTION * B:
        raise TooManyExclusions(f"{len(excluded)} of {B} examples failed to converge")
    idx = np.array([r[0] for r in kept], dtype=int)
    return TrainingSet(
        example_id=idx,
        pattern_id=np.asarray(pattern_ids)[idx],
        truth=scenarios[idx],
        features=np.array([r[1] for r in kept]),
        label_S=np.array([r[2] for r in kept]),
        label_P=np.array([r[3] for r in kept]),
        excluded=excluded,
    )


@dataclass
class SurrogateFit:
    model: MlpModel
    spec: MlpSpec
    cv_scores: list[float]
    validation_mse: float
    train_mse: float


def select_and_fit(candidates, x, y, cv_cfg: TrainConfig, train_cfg: TrainConfig) -> SurrogateFit:
    """Cross-validate the candidates, then fit the winner with ``train_cfg``."""
    best, scores = cross_validate(candidates, x, y, cv_cfg)
    model = fit(best, x, y, train_cfg)
    summary = model.training_summary
    model.training_summary = dict(summary, cv_scores=scores)
    val = summary["holdout_mse"]
    return SurrogateFit(model, best, scores, float(val) if val is not None else float("nan"), summary["train_mse"])


def fit_posterior_surrogates(
    training: TrainingSet,
    candidates_S: Sequence[MlpSpec],
    candidates_P: Sequence[MlpSpec],
    cv_cfg: TrainConfig,
    train_cfg: TrainConfig,
) -> tuple[SurrogateFit, SurrogateFit]:
    """Fit the promise-probability network (all four fractions in) and the
    posterior-mean network (control fractions only)."""
    if len(training) < 500:
        raise ValueError(f"need at least 500 training examples, got {len(training)}")
    dim = training.features.shape[1] // 2
    for c in candidates_S:
        if (c.input_dim, c.output_dim) != (2 * dim, dim):
            raise ValueError("F_S candidates must map 2I features to I outputs")
    for c in candidates_P:
        if (c.input_dim, c.output_dim) != (dim, dim):
            raise ValueError("F_P candidates must map I features to I outputs")
    fs = select_and_fit(candidates_S, training.features, training.label_S, cv_cfg, train_cfg)
    fp = select_and_fit(
        candidates_P,
        training.features[:, :dim],
        training.label_P,
        cv_cfg,
        replace(train_cfg, seed=train_cfg.seed + 1),
    )
    return fs, fp


def surrogate_features(r_control, r_treatment, n_control: int, n_treatment: int) -> np.ndarray:
    """Network input rows from count arrays ``(..., I)``."""
    return np.concatenate(
        [np.asarray(r_control, dtype=float) / n_control, np.asarray(r_treatment, dtype=float) / n_treatment],
        axis=-1,
    )
