"""End-to-end training of a locked design."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from .calibration import constant_cutoff_baseline, fit_critical_networks
from .data import CASE_STUDY_HISTORY, CASE_STUDY_SCENARIOS, CASE_STUDY_SPACES, SIMULATION_SPACES, SIMULATION_HISTORY
from .design import TrainedDesign, fingerprint_of
from .mcmc import McmcConfig
from .mlp import TrainConfig, candidate_grid
from .surrogate import (
    TrainingSet,
    draw_scenarios,
    fit_posterior_surrogates,
    generate_training_set,
    training_patterns,
)
from .types import (
    SCHEMA_VERSION,
    EndpointConfig,
    HierPriorConfig,
    HistoricalDataset,
    ParameterSpaces,
    SchemaError,
    ValidationReport,
)

log = logging.getLogger(__name__)

FULL_SCALE = {"n_examples": 8000, "n_null_sim": 100_000, "replicates": 100_000}


@dataclass(frozen=True)
class DesignConfig:
    history: HistoricalDataset = SIMULATION_HISTORY
    n_control: int = 150
    n_treatment: int = 150
    spaces: ParameterSpaces = SIMULATION_SPACES
    endpoint_cfg: EndpointConfig = EndpointConfig()
    prior: HierPriorConfig | None = None
    mcmc_cfg: McmcConfig = McmcConfig()
    n_examples: int = 2000
    n_null_grid: tuple[int, int, int] = (2000, 2000, 2000)
    n_null_sim: int = 20_000
    alpha: float = 0.05
    cv_epochs: int = 100
    train_epochs: int = 1000
    baseline_scenarios: tuple[tuple[float, float], ...] = ((0.3, 0.2), (0.4, 0.3), (0.5, 0.4))
    cutoff_step: float = 5e-4
    seed: int = 11
    workers: int = 1

    @property
    def prior_or_default(self) -> HierPriorConfig:
        return self.prior or HierPriorConfig.default(self.history.endpoint_count)

    def cv_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.cv_epochs, seed=self.seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.train_epochs, seed=self.seed)

    def full_scale(self) -> "DesignConfig":
        return replace(self, n_examples=FULL_SCALE["n_examples"], n_null_sim=FULL_SCALE["n_null_sim"])

    def violations(self) -> list[str]:
        out = list(self.history.violations()) + list(self.spaces.violations()) + list(self.endpoint_cfg.violations())
        out += list(self.prior_or_default.violations())
        if self.n_control < 1 or self.n_treatment < 1:
            out.append("sample sizes must be positive")
        if self.n_examples % 4:
            out.append("n_examples must be divisible by the 4 scenario patterns")
        if self.n_examples < 500:
            out.append("n_examples must be at least 500")
        if not 0 < self.alpha < 1:
            out.append("alpha must lie in (0, 1)")
        if self.n_null_sim < 1000:
            out.append("n_null_sim must be at least 1000")
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "history": self.history.to_dict(),
            "n_control": self.n_control,
            "n_treatment": self.n_treatment,
            "parameter_spaces": self.spaces.to_dict(),
            "endpoint_config": self.endpoint_cfg.to_dict(),
            "prior": self.prior_or_default.to_dict(),
            "mcmc_config": self.mcmc_cfg.to_dict(),
            "n_examples": self.n_examples,
            "n_null_grid": list(self.n_null_grid),
            "n_null_sim": self.n_null_sim,
            "alpha": self.alpha,
            "cv_epochs": self.cv_epochs,
            "train_epochs": self.train_epochs,
            "baseline_scenarios": [list(s) for s in self.baseline_scenarios],
            "cutoff_step": self.cutoff_step,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "DesignConfig":
        """Build from a config document; ``history`` may be inline or a path to a JSON file."""
        doc = dict(doc)
        if doc.pop("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise SchemaError("DesignConfig: unsupported schema_version")
        known = {f for f in cls.__dataclass_fields__} | {"parameter_spaces", "endpoint_config", "mcmc_config"}
        unknown = set(doc) - known
        if unknown:
            raise SchemaError(f"DesignConfig: unknown fields {sorted(unknown)}")
        kw = {}
        if "history" in doc:
            h = doc["history"]
            if isinstance(h, str):
                p = Path(h)
                if base_dir is not None and not p.is_absolute():
                    p = base_dir / p
                h = json.loads(p.read_text())
            kw["history"] = HistoricalDataset.from_dict(h)
        if "parameter_spaces" in doc:
            kw["spaces"] = ParameterSpaces.from_dict(doc["parameter_spaces"])
        if "endpoint_config" in doc:
            kw["endpoint_cfg"] = EndpointConfig.from_dict(doc["endpoint_config"])
        if "prior" in doc:
            kw["prior"] = HierPriorConfig.from_dict(doc["prior"])
        if "mcmc_config" in doc:
            kw["mcmc_cfg"] = McmcConfig.from_dict(doc["mcmc_config"])
        for name in ("n_control", "n_treatment", "n_examples", "n_null_sim", "cv_epochs", "train_epochs", "seed", "workers"):
            if name in doc:
                kw[name] = int(doc[name])
        for name in ("alpha", "cutoff_step"):
            if name in doc:
                kw[name] = float(doc[name])
        if "n_null_grid" in doc:
            kw["n_null_grid"] = tuple(int(v) for v in doc["n_null_grid"])
        if "baseline_scenarios" in doc:
            kw["baseline_scenarios"] = tuple(tuple(float(x) for x in s) for s in doc["baseline_scenarios"])
        return cls(**kw)


def case_study_config(**overrides) -> DesignConfig:
    """Three historical studies, 200 patients per arm, calibrated at the three named scenarios."""
    base = DesignConfig(
        history=CASE_STUDY_HISTORY,
        n_control=200,
        n_treatment=200,
        spaces=CASE_STUDY_SPACES,
        baseline_scenarios=tuple(CASE_STUDY_SCENARIOS.values()),
    )
    return replace(base, **overrides)


def build_training_set(cfg: DesignConfig, progress=None) -> TrainingSet:
    scenarios, pattern_ids = draw_scenarios(training_patterns(cfg.spaces), cfg.n_examples, cfg.seed)
    return generate_training_set(
        cfg.history,
        cfg.n_control,
        cfg.n_treatment,
        scenarios,
        cfg.prior_or_default,
        cfg.mcmc_cfg,
        cfg.endpoint_cfg,
        cfg.seed,
        pattern_ids,
        workers=cfg.workers,
        progress=progress,
    )


def train_design(cfg: DesignConfig, training: TrainingSet | None = None, progress=None) -> TrainedDesign:
    """Label (or reuse) the training set, fit F_S and F_P, calibrate, and compute the baseline cutoff."""
    report = ValidationReport(tuple(cfg.violations()))
    if not report.ok:
        raise SchemaError("; ".join(report.violations))
    if training is None:
        training = build_training_set(cfg, progress)
    dim = cfg.history.endpoint_count
    fs, fp = fit_posterior_surrogates(
        training,
        candidate_grid(2 * dim, dim),
        candidate_grid(dim, dim),
        cfg.cv_config(),
        cfg.train_config(),
    )
    log.info("F_S %s train mse %.2e; F_P %s train mse %.2e", fs.spec.hidden_widths, fs.train_mse, fp.spec.hidden_widths, fp.train_mse)
    critical = fit_critical_networks(
        fs.model,
        cfg.spaces,
        *cfg.n_null_grid,
        cfg.n_null_sim,
        cfg.alpha,
        cfg.cv_config(),
        cfg.train_config(),
        cfg.seed,
        cfg.n_control,
        cfg.n_treatment,
    )
    c_const, per = constant_cutoff_baseline(
        fs.model,
        cfg.baseline_scenarios,
        cfg.n_control,
        cfg.n_treatment,
        cfg.n_null_sim,
        cfg.alpha,
        cfg.cutoff_step,
        cfg.seed,
    )
    provenance = {
        "config": cfg.to_dict(),
        "config_hash": fingerprint_of(cfg.to_dict()),
        "training_examples": len(training),
        "excluded_examples": [list(e) for e in training.excluded],
        "f_s_train_mse": fs.train_mse,
        "f_p_train_mse": fp.train_mse,
        "critical_train_mse": {k: v.train_mse for k, v in critical.fits.items()},
        "baseline_per_scenario": per,
    }
    return TrainedDesign(
        endpoint_cfg=cfg.endpoint_cfg,
        spaces=cfg.spaces,
        history=cfg.history,
        n_control=cfg.n_control,
        n_treatment=cfg.n_treatment,
        prior=cfg.prior_or_default,
        f_s=fs.model,
        f_p=fp.model,
        critical=critical,
        c_const=c_const,
        mcmc_cfg=cfg.mcmc_cfg,
        provenance=provenance,
    )


def training_key(cfg: DesignConfig) -> str:
    d = cfg.to_dict()
    keep = ("history", "n_control", "n_treatment", "parameter_spaces", "endpoint_config", "prior", "mcmc_config", "n_examples", "seed")
    return fingerprint_of({k: d[k] for k in keep})[:16]


def cached_design(cfg: DesignConfig, cache_dir, progress=None) -> TrainedDesign:
    """Load the design for ``cfg`` from ``cache_dir``, training (and caching) it when absent.

    The labeled training set is cached separately since it dominates the cost.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    design_path = cache_dir / f"design-{fingerprint_of(cfg.to_dict())[:16]}.json"
    if design_path.exists():
        return TrainedDesign.load(design_path)
    ts_path = cache_dir / f"training-{training_key(cfg)}.csv"
    if ts_path.exists():
        training = TrainingSet.read_csv(ts_path)
    else:
        training = build_training_set(cfg, progress)
        training.to_csv(ts_path)
    design = train_design(cfg, training, progress)
    design.save(design_path)
    return design
