"""Posterior sampling for the logit-normal hierarchical control model.

Control counts of study ``j`` (``j = 0`` is the current trial) follow
``Binomial(n_j, expit(mu_j))`` with ``mu_j ~ MVN(theta, Sigma)``. Priors:
``theta_i ~ N(0, 1/tau)`` independently, ``Sigma ~ InverseWishart(Sigma0, k)``
where ``Sigma^{-1}`` has Wishart mean ``k * Sigma0^{-1}``.

The sampler is Metropolis-within-Gibbs:

* component-wise Gaussian random-walk updates of every ``mu_{i,j}``,
* exact normal update of ``theta``,
* exact inverse-Wishart update of ``Sigma``.

Many independent runs (examples x chains) advance in lockstep as one batch of
numpy arrays. Each chain owns its own counter-based random streams, so the
draws of a run do not depend on which batch it was scheduled in.

Treatment arms use the beta-binomial conjugate posterior.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import expit, logit

from .errors import DegenerateChains, NonConvergence, NumericalFailure
from .rng import stream
from .types import CurrentTrialObservation, EndpointConfig, HierPriorConfig, HistoricalDataset

EIG_FLOOR = 1e-12
_BLOCK = 256


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 3
    burn_in: int = 2000
    kept_draws_per_chain: int = 3334
    thinning: int = 1
    rhat_threshold: float = 1.01
    accept_band: tuple[float, float] = (0.25, 0.45)
    adapt_window: int = 50
    max_restarts: int = 1
    seed: int = 20240101

    def __post_init__(self):
        if self.chains < 2:
            raise ValueError("at least two chains are required for R-hat")
        if self.kept_draws_per_chain * self.chains < 1000:
            raise ValueError("kept draws x chains must be at least 1000")
        if not self.rhat_threshold > 1.0:
            raise ValueError("rhat_threshold must exceed 1")
        if self.thinning < 1 or self.burn_in < 0 or self.adapt_window < 1:
            raise ValueError("thinning/adapt_window must be >= 1 and burn_in >= 0")

    @property
    def total_draws(self) -> int:
        return self.chains * self.kept_draws_per_chain

    def to_dict(self) -> dict:
        return {
            "chains": self.chains,
            "burn_in": self.burn_in,
            "kept_draws_per_chain": self.kept_draws_per_chain,
            "thinning": self.thinning,
            "rhat_threshold": self.rhat_threshold,
            "accept_band": list(self.accept_band),
            "adapt_window": self.adapt_window,
            "max_restarts": self.max_restarts,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "McmcConfig":
        doc = dict(doc)
        if "accept_band" in doc:
            doc["accept_band"] = tuple(doc["accept_band"])
        return cls(**doc)


@dataclass
class PosteriorDraws:
    """Posterior draws of the current-trial rates.

    ``control_draws`` is ``(n_draws, I)`` in chain-major order. ``rhat`` and
    ``acceptance`` summarize the control sampler; ``theta_draws`` and
    ``sigma_draws`` are only filled when requested.
    """

    control_draws: np.ndarray
    treatment_draws: np.ndarray | None = None
    rhat: np.ndarray | None = None
    acceptance: np.ndarray | None = None
    chains: int = 1
    attempts: int = 1
    theta_draws: np.ndarray | None = None
    sigma_draws: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.control_draws.shape[0]

    def dump_csv(self, path) -> None:
        """Write ``draw_index, chain, parameter_name, value`` rows."""
        per_chain = self.n_draws // self.chains
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["draw_index", "chain", "parameter_name", "value"])
            blocks = [("psi_c", self.control_draws)]
            if self.treatment_draws is not None:
                blocks.append(("psi_t", self.treatment_draws))
            for name, arr in blocks:
                for d in range(arr.shape[0]):
                    for i in range(arr.shape[1]):
                        w.writerow([d, d // per_chain, f"{name}[{i + 1}]", repr(float(arr[d, i]))])


# ---------------------------------------------------------------------------
# linear algebra helpers


def spd_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of (a stack of) symmetric matrices with eigenvalues floored."""
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    w, v = np.linalg.eigh(a)
    w = np.maximum(w, EIG_FLOOR)
    return (v / w[..., None, :]) @ np.swapaxes(v, -1, -2)


def _chol(a: np.ndarray) -> np.ndarray:
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(a)
        if w.min() < -1e-8 * max(1.0, np.abs(w).max()):
            raise NumericalFailure("covariance lost positive definiteness") from None
        w = np.maximum(w, EIG_FLOOR)
        # QR of the symmetric square root gives a valid triangular factor
        root = v * np.sqrt(w)[..., None, :]
        _, r = np.linalg.qr(np.swapaxes(root, -1, -2))
        l = np.swapaxes(r, -1, -2)
        sign = np.sign(np.diagonal(l, axis1=-2, axis2=-1))
        sign[sign == 0] = 1.0
        return l * sign[..., None, :]


# ---------------------------------------------------------------------------
# conjugate conditionals (exposed for oracle testing)


def update_theta(
    mu_matrix: np.ndarray, sigma: np.ndarray, prior: HierPriorConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of ``theta | mu, Sigma``.

    ``mu_matrix`` is ``(J+1, I)``. The covariance is
    ``(tau*I + (J+1) Sigma^{-1})^{-1}`` and the mean is
    ``cov @ Sigma^{-1} @ sum_j mu_j``.
    """
    mu_matrix = np.atleast_2d(np.asarray(mu_matrix, dtype=float))
    sigma = np.asarray(sigma, dtype=float)
    w = np.linalg.eigvalsh(0.5 * (sigma + sigma.T))
    if not np.all(np.isfinite(w)) or w.min() <= EIG_FLOOR:
        raise NumericalFailure("Sigma is not invertible")
    prec = spd_inverse(sigma)
    units, dim = mu_matrix.shape
    cov = spd_inverse(prior.theta_precision * np.eye(dim) + units * prec)
    mean = cov @ (prec @ mu_matrix.sum(axis=0))
    return mean, cov


def update_sigma(
    mu_matrix: np.ndarray, theta: np.ndarray, prior: HierPriorConfig
) -> tuple[float, np.ndarray]:
    """Degrees of freedom and scale of ``Sigma | mu, theta``."""
    mu_matrix = np.atleast_2d(np.asarray(mu_matrix, dtype=float))
    resid = mu_matrix - np.asarray(theta, dtype=float)
    scale = prior.sigma0_array + resid.T @ resid
    return prior.wishart_df + mu_matrix.shape[0], 0.5 * (scale + scale.T)


def sample_inverse_wishart(
    df: float, scale: np.ndarray, rng: np.random.Generator, size: int = 1
) -> np.ndarray:
    """Draw ``size`` matrices from InverseWishart(scale, df) via Bartlett."""
    scale = np.asarray(scale, dtype=float)
    dim = scale.shape[0]
    lower = _chol(spd_inverse(scale))
    a = np.zeros((size, dim, dim))
    a[:, np.arange(dim), np.arange(dim)] = np.sqrt(rng.chisquare(df - np.arange(dim), size=(size, dim)))
    rows, cols = np.tril_indices(dim, -1)
    a[:, rows, cols] = rng.standard_normal((size, rows.size))
    la = lower @ a
    prec = la @ np.swapaxes(la, -1, -2)
    return spd_inverse(prec)


def gelman_rubin(chains: Sequence[Sequence[float]] | np.ndarray) -> float:
    """Potential scale reduction factor of equal-length chains.

    ``sqrt(((n-1)/n * W + B/n) / W)`` with ``W`` the mean within-chain
    variance and ``B`` equal to ``n`` times the variance of the chain means.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError("need at least two chains of length >= 2")
    return float(_rhat(x[None, :, :, None])[0, 0])


def batch_means_mcse(x: np.ndarray, n_batches: int = 50) -> np.ndarray:
    """Monte Carlo standard error of the column means of ``x`` by batch means."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    size = x.shape[0] // n_batches
    if size < 1:
        raise ValueError("not enough draws for batch means")
    means = x[: size * n_batches].reshape(n_batches, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


def _rhat(x: np.ndarray) -> np.ndarray:
    """R-hat over axis 1 (chains) and axis 2 (draws) of a ``(B, m, n, I)`` array."""
    n = x.shape[2]
    w = x.var(axis=2, ddof=1).mean(axis=1)
    b = n * x.mean(axis=2).var(axis=1, ddof=1)
    if np.any(w <= 0):
        raise DegenerateChains("within-chain variance is zero")
    return np.sqrt(((n - 1) / n * w + b / n) / w)


# ---------------------------------------------------------------------------
# batched Metropolis-within-Gibbs


class _Noise:
    """Per-chain random streams consumed in fixed-size blocks."""

    def __init__(self, seed, keys, chains, units, dim, df_post):
        self.units, self.dim = units, dim
        self.n_tri = dim * (dim - 1) // 2
        self.chi_df = df_post - np.arange(dim)
        self.gens = []
        for key in keys:
            for c in range(chains):
                self.gens.append(
                    (
                        stream(seed, *key, c, 0),  # normals
                        stream(seed, *key, c, 1),  # uniforms
                        stream(seed, *key, c, 2),  # chi-squares
                    )
                )
        self.pos = _BLOCK

    def init_normals(self):
        return np.stack([g[0].standard_normal((self.units, self.dim)) for g in self.gens])

    def next(self):
        if self.pos == _BLOCK:
            ui = self.units * self.dim
            nz = ui + self.dim + self.n_tri
            z = np.stack([g[0].standard_normal((_BLOCK, nz)) for g in self.gens], axis=1)
            u = np.stack([g[1].random((_BLOCK, ui)) for g in self.gens], axis=1)
            chi = np.stack([g[2].chisquare(self.chi_df, size=(_BLOCK, self.dim)) for g in self.gens], axis=1)
            k = len(self.gens)
            self.mh_z = z[:, :, :ui].reshape(_BLOCK, k, self.units, self.dim)
            self.th_z = z[:, :, ui : ui + self.dim]
            self.tri_z = z[:, :, ui + self.dim :]
            with np.errstate(divide="ignore"):
                self.log_u = np.log(u).reshape(_BLOCK, k, self.units, self.dim)
            self.chi_sqrt = np.sqrt(chi)
            self.pos = 0
        p = self.pos
        self.pos += 1
        return self.mh_z[p], self.log_u[p], self.th_z[p], self.tri_z[p], self.chi_sqrt[p]


def _run_batch(
    r_units: np.ndarray,
    n_units: np.ndarray,
    prior: HierPriorConfig,
    cfg: McmcConfig,
    seed: int,
    keys: Sequence[tuple],
    burn_in: int,
    keep_hyper: bool = False,
) -> dict:
    """Advance ``len(keys) * chains`` independent chains together.

    ``r_units`` is ``(B, U, I)`` counts with unit 0 the current control arm and
    ``n_units`` is ``(B, U)``. Returns kept ``psi`` draws of unit 0 shaped
    ``(B, chains, kept, I)`` plus post-burn-in acceptance rates.
    """
    nb, units, dim = r_units.shape
    m = cfg.chains
    k = nb * m
    r = np.repeat(r_units.astype(float), m, axis=0)
    n = np.repeat(n_units.astype(float), m, axis=0)
    tau = prior.theta_precision
    sigma0 = prior.sigma0_array
    df_post = prior.wishart_df + units
    noise = _Noise(seed, keys, m, units, dim, df_post)

    # overdispersed start around the empirical logits
    phat = (r + 0.5) / (n[..., None] + 1.0)
    mu = logit(phat) + 0.5 * noise.init_normals()
    theta = mu.mean(axis=1)
    prec = np.broadcast_to(spd_inverse(sigma0 / prior.wishart_df), (k, dim, dim)).copy()
    # roughly 2.4 posterior sd of a single logit given its own data
    scale = 2.4 / np.sqrt(n[..., None] * phat * (1.0 - phat) + 1.0)

    lo, hi = cfg.accept_band
    target = 0.5 * (lo + hi)
    acc_win = np.zeros((k, units, dim))
    acc_post = np.zeros((k, units, dim))
    kept = cfg.kept_draws_per_chain
    total = burn_in + kept * cfg.thinning
    psi_out = np.empty((k, kept, dim))
    if keep_hyper:
        theta_out = np.empty((k, kept, dim))
        prec_out = np.empty((k, kept, dim, dim))
    eye = np.eye(dim)
    rows, cols = np.tril_indices(dim, -1)
    diag = np.arange(dim)
    softplus = lambda x: np.logaddexp(0.0, x)  # noqa: E731
    sp = softplus(mu)

    for it in range(total):
        mh_z, log_u, th_z, tri_z, chi_sqrt = noise.next()
        # (a) random-walk updates, one endpoint at a time, all units at once
        for i in range(dim):
            delta = scale[:, :, i] * mh_z[:, :, i]
            cur = mu[:, :, i]
            prop = cur + delta
            sp_prop = softplus(prop)
            dll = r[:, :, i] * delta - n * (sp_prop - sp[:, :, i])
            resid = mu - theta[:, None, :]
            pd = np.einsum("kl,kul->ku", prec[:, i, :], resid)
            dlp = -(delta * pd + 0.5 * delta * delta * prec[:, i, i][:, None])
            acc = log_u[:, :, i] < dll + dlp
            mu[:, :, i] = np.where(acc, prop, cur)
            sp[:, :, i] = np.where(acc, sp_prop, sp[:, :, i])
            if it < burn_in:
                acc_win[:, :, i] += acc
            else:
                acc_post[:, :, i] += acc
        if it < burn_in and (it + 1) % cfg.adapt_window == 0:
            rate = acc_win / cfg.adapt_window
            adjust = np.where((rate < lo) | (rate > hi), np.exp(rate - target), 1.0)
            scale *= adjust
            acc_win[:] = 0.0
        # (b) theta | mu, Sigma
        cov = spd_inverse(tau * eye + units * prec)
        mean = np.einsum("kij,kj->ki", cov, np.einsum("kij,kj->ki", prec, mu.sum(axis=1)))
        theta = mean + np.einsum("kij,kj->ki", _chol(cov), th_z)
        # (c) Sigma | mu, theta, sampled through its precision
        resid = mu - theta[:, None, :]
        s = sigma0 + np.einsum("kui,kuj->kij", resid, resid)
        lower = _chol(spd_inverse(s))
        a = np.zeros((k, dim, dim))
        a[:, diag, diag] = chi_sqrt
        a[:, rows, cols] = tri_z
        la = lower @ a
        prec = la @ np.swapaxes(la, -1, -2)
        if not np.all(np.isfinite(prec)):
            raise NumericalFailure("non-finite precision draw")
        j = it - burn_in
        if j >= 0 and (j + 1) % cfg.thinning == 0:
            d = j // cfg.thinning
            psi_out[:, d, :] = expit(mu[:, 0, :])
            if keep_hyper:
                theta_out[:, d, :] = theta
                prec_out[:, d] = prec

    out = {
        "psi": psi_out.reshape(nb, m, kept, dim),
        "acceptance": (acc_post / max(1, total - burn_in)).reshape(nb, m, units, dim),
    }
    if keep_hyper:
        out["theta"] = theta_out.reshape(nb, m, kept, dim)
        sig = spd_inverse(prec_out)
        out["sigma"] = sig.reshape(nb, m, kept, dim, dim)
    return out


def _stack_units(hist: HistoricalDataset, r_control: np.ndarray, n_control: int):
    r_control = np.atleast_2d(np.asarray(r_control, dtype=np.int64))
    nb = r_control.shape[0]
    hr = hist.r
    r_units = np.concatenate([r_control[:, None, :], np.broadcast_to(hr, (nb,) + hr.shape)], axis=1)
    n_units = np.concatenate([np.full((nb, 1), n_control), np.broadcast_to(hist.n, (nb, hist.n.size))], axis=1)
    return r_units, n_units


def sample_hier_batch(
    hist: HistoricalDataset,
    r_control: np.ndarray,
    n_control: int,
    prior: HierPriorConfig,
    cfg: McmcConfig,
    seed: int,
    unit_ids: Sequence[int],
    keep_hyper: bool = False,
) -> list:
    """Posterior draws for many current-control outcomes at once.

    Row ``b`` of ``r_control`` is sampled with streams keyed by
    ``unit_ids[b]``. Returns one :class:`PosteriorDraws` per row, or a
    :class:`NonConvergence` instance for rows that stay above the R-hat
    threshold after the allowed restarts (each restart doubles burn-in).
    """
    r_units, n_units = _stack_units(hist, r_control, n_control)
    results: list = [None] * len(unit_ids)
    pending = np.arange(len(unit_ids))
    burn_in = cfg.burn_in
    for attempt in range(cfg.max_restarts + 1):
        keys = [("mcmc", int(unit_ids[b]), attempt) for b in pending]
        out = _run_batch(r_units[pending], n_units[pending], prior, cfg, seed, keys, burn_in, keep_hyper)
        try:
            rhat = _rhat(out["psi"])
        except DegenerateChains:
            rhat = np.full((len(pending), r_units.shape[2]), np.inf)
        failed = []
        for idx, b in enumerate(pending):
            rh = rhat[idx]
            if np.all(rh < cfg.rhat_threshold):
                draws = PosteriorDraws(
                    control_draws=out["psi"][idx].reshape(-1, r_units.shape[2]),
                    rhat=rh,
                    acceptance=out["acceptance"][idx],
                    chains=cfg.chains,
                    attempts=attempt + 1,
                )
                if keep_hyper:
                    draws.theta_draws = out["theta"][idx].reshape(-1, r_units.shape[2])
                    draws.sigma_draws = out["sigma"][idx].reshape((-1,) + out["sigma"].shape[-2:])
                results[b] = draws
            else:
                failed.append(b)
                results[b] = NonConvergence(
                    f"R-hat {np.round(rh, 4).tolist()} >= {cfg.rhat_threshold} after {attempt + 1} attempt(s)",
                    rhat=rh,
                )
        pending = np.array(failed, dtype=int)
        if pending.size == 0:
            break
        burn_in *= 2
    return results


def sample_hier_posterior(
    hist: HistoricalDataset,
    r_control: Sequence[int],
    n_control: int,
    prior: HierPriorConfig,
    cfg: McmcConfig = McmcConfig(),
    keep_hyper: bool = False,
) -> PosteriorDraws:
    """Posterior draws of the current control rates; raises NonConvergence."""
    res = sample_hier_batch(hist, np.asarray(r_control)[None, :], n_control, prior, cfg, cfg.seed, [0], keep_hyper)[0]
    if isinstance(res, Exception):
        raise res
    return res


def sample_beta_posterior(r: int, n: int, a: float, b: float, n_draws: int, seed: int | np.random.Generator) -> np.ndarray:
    """IID draws from ``Beta(a + r, b + n - r)``."""
    if not 0 <= r <= n:
        raise ValueError("need 0 <= r <= n")
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "beta")
    return rng.beta(a + r, b + n - r, size=n_draws)


def sample_posterior(
    hist: HistoricalDataset,
    cur: CurrentTrialObservation,
    prior: HierPriorConfig,
    endpoint_cfg: EndpointConfig,
    cfg: McmcConfig = McmcConfig(),
) -> PosteriorDraws:
    """Control draws from the hierarchical model plus matching treatment draws."""
    draws = sample_hier_posterior(hist, cur.r_control, cur.n_control, prior, cfg)
    draws.treatment_draws = treatment_draws(cur, endpoint_cfg, draws.n_draws, stream(cfg.seed, "beta", 0))
    return draws


def treatment_draws(cur: CurrentTrialObservation, endpoint_cfg: EndpointConfig, n_draws: int, rng) -> np.ndarray:
    cols = [
        sample_beta_posterior(r, cur.n_treatment, a, b, n_draws, rng)
        for r, (a, b) in zip(cur.r_treatment, endpoint_cfg.treatment_prior)
    ]
    return np.column_stack(cols)


def posterior_prob_S(control_draws: np.ndarray, treatment_draws: np.ndarray, margins: Sequence[float]) -> np.ndarray:
    """Fraction of paired draws where treatment minus control exceeds the margin."""
    c = np.atleast_2d(np.asarray(control_draws, dtype=float))
    t = np.atleast_2d(np.asarray(treatment_draws, dtype=float))
    if c.shape != t.shape:
        raise ValueError(f"draw shapes differ: {c.shape} vs {t.shape}")
    return ((t - c) > np.asarray(margins, dtype=float)).mean(axis=0)


def posterior_mean_control(control_draws: np.ndarray) -> np.ndarray:
    c = np.atleast_2d(np.asarray(control_draws, dtype=float))
    if c.shape[0] == 0:
        raise ValueError("no draws")
    return c.mean(axis=0)


def with_burn_in(cfg: McmcConfig, burn_in: int) -> McmcConfig:
    return replace(cfg, burn_in=burn_in)
