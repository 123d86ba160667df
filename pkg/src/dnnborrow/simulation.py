"""Operating characteristics: error rates, power, bias and RMSE by simulation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .decision import DecisionMode, decide_counts
from .design import fingerprint_of
from .errors import InvalidRange
from .rng import stream

RESULT_COLUMNS = (
    "label",
    "psi_c1",
    "psi_c2",
    "delta1",
    "delta2",
    "replicates",
    "mode",
    "reject_h12",
    "mcse_h12",
    "reject_h1",
    "mcse_h1",
    "reject_h2",
    "mcse_h2",
    "bias1",
    "bias2",
    "rmse1",
    "rmse2",
    "clamped_fraction",
)


@dataclass(frozen=True)
class Scenario:
    control_rates: tuple[float, float]
    effects: tuple[float, float] = (0.0, 0.0)
    replicates: int = 10_000
    label: str = ""

    def __post_init__(self):
        t = np.add(self.control_rates, self.effects)
        if np.any(np.asarray(self.control_rates) <= 0) or np.any(np.asarray(self.control_rates) >= 1):
            raise InvalidRange(f"control rates {self.control_rates} outside (0, 1)")
        if np.any(t <= 0) or np.any(t >= 1):
            raise InvalidRange(f"treatment rates {tuple(t)} outside (0, 1)")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")

    @property
    def treatment_rates(self) -> np.ndarray:
        return np.add(self.control_rates, self.effects)

    @property
    def is_global_null(self) -> bool:
        return all(e == 0 for e in self.effects)

    def to_dict(self) -> dict:
        return {
            "control_rates": list(self.control_rates),
            "effects": list(self.effects),
            "replicates": self.replicates,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        return cls(
            tuple(float(v) for v in doc["control_rates"]),
            tuple(float(v) for v in doc.get("effects", (0.0, 0.0))),
            int(doc.get("replicates", 10_000)),
            str(doc.get("label", "")),
        )


def mcse(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


@dataclass
class ScenarioResult:
    scenario: Scenario
    mode: str
    reject_h12_rate: float
    reject_h1_rate: float
    reject_h2_rate: float
    bias: tuple[float, float]
    rmse: tuple[float, float]
    clamped_fraction: float = 0.0

    @property
    def n(self) -> int:
        return self.scenario.replicates

    @property
    def mcse_h12(self) -> float:
        return mcse(self.reject_h12_rate, self.n)

    @property
    def mcse_h1(self) -> float:
        return mcse(self.reject_h1_rate, self.n)

    @property
    def mcse_h2(self) -> float:
        return mcse(self.reject_h2_rate, self.n)

    def row(self) -> list:
        s = self.scenario
        vals = [
            s.label,
            *s.control_rates,
            *s.effects,
            s.replicates,
            self.mode,
            self.reject_h12_rate,
            self.mcse_h12,
            self.reject_h1_rate,
            self.mcse_h1,
            self.reject_h2_rate,
            self.mcse_h2,
            *self.bias,
            *self.rmse,
            self.clamped_fraction,
        ]
        return [v if isinstance(v, str) else repr(v) for v in vals]


def simulate_scenario_counts(scenario: Scenario, n_control: int, n_treatment: int, seed: int, index: int):
    """Counts for every replicate; replicate ``k`` uses stream ``(seed, index, k)``."""
    reps = scenario.replicates
    rc = np.empty((reps, 2), dtype=np.int64)
    rt = np.empty((reps, 2), dtype=np.int64)
    pc = np.asarray(scenario.control_rates, dtype=float)
    pt = scenario.treatment_rates
    for k in range(reps):
        rng = stream(seed, "oc_sim", index, k)
        rc[k] = rng.binomial(n_control, pc)
        rt[k] = rng.binomial(n_treatment, pt)
    return rc, rt


def _summarize(scenario, mode, decision) -> ScenarioResult:
    rej = decision.rejected
    err = decision.posterior_mean_hat - np.asarray(scenario.control_rates, dtype=float)
    n = rej.shape[0]
    bias = tuple(math.fsum(err[:, i]) / n for i in range(2))
    rmse = tuple(math.sqrt(math.fsum(err[:, i] ** 2) / n) for i in range(2))
    return ScenarioResult(
        scenario=scenario,
        mode=DecisionMode(mode).value,
        reject_h12_rate=int(np.count_nonzero(rej.any(axis=1))) / n,
        reject_h1_rate=int(np.count_nonzero(rej[:, 0])) / n,
        reject_h2_rate=int(np.count_nonzero(rej[:, 1])) / n,
        bias=bias,
        rmse=rmse,
        clamped_fraction=int(np.count_nonzero(decision.clamped.any(axis=1))) / n,
    )


def run_operating_characteristics(
    design,
    scenarios: Sequence[Scenario],
    seed: int,
    mode: DecisionMode | str = DecisionMode.SURROGATE,
) -> list[ScenarioResult]:
    """Rejection rates (``H12`` = at least one rejection), bias and RMSE per scenario."""
    out = []
    for idx, sc in enumerate(scenarios):
        rc, rt = simulate_scenario_counts(sc, design.n_control, design.n_treatment, seed, idx)
        out.append(_summarize(sc, mode, decide_counts(design, rc, rt, mode)))
    return out


def compare_power_preservation(design, c_const: float, scenarios: Sequence[Scenario], seed: int) -> list[dict]:
    """Surrogate critical values against a single constant cutoff on the same simulated trials."""
    const_design = replace(design, c_const=float(c_const))
    table = []
    for idx, sc in enumerate(scenarios):
        rc, rt = simulate_scenario_counts(sc, design.n_control, design.n_treatment, seed, idx)
        sur = _summarize(sc, DecisionMode.SURROGATE, decide_counts(design, rc, rt, DecisionMode.SURROGATE))
        con = _summarize(sc, DecisionMode.CONSTANT_BASELINE, decide_counts(const_design, rc, rt, "constant_baseline"))
        table.append(
            {
                "scenario": sc,
                "surrogate": sur,
                "constant": con,
                "power_difference": sur.reject_h12_rate - con.reject_h12_rate,
            }
        )
    return table


@dataclass(frozen=True)
class CaseStudyConfig:
    design: object
    scenarios: dict
    effect_grid: tuple[float, ...] = (0.0, 0.03, 0.06, 0.09)
    replicates: int = 10_000


def case_study_scenarios(cfg: CaseStudyConfig) -> list[Scenario]:
    return [
        Scenario(tuple(rates), (d, d), cfg.replicates, f"{name}:{d:g}")
        for name, rates in cfg.scenarios.items()
        for d in cfg.effect_grid
    ]


def run_case_study(case_config: CaseStudyConfig, seed: int) -> list[ScenarioResult]:
    """Operating characteristics at each named control-rate scenario and common effect."""
    return run_operating_characteristics(case_config.design, case_study_scenarios(case_config), seed)


def naive_pooled_estimate(history, r_control, n_control: int) -> np.ndarray:
    """Control-rate estimate pooling every historical study with the current arm."""
    rc = np.atleast_2d(np.asarray(r_control, dtype=float))
    return (history.r.sum(axis=0) + rc) / (history.n.sum() + n_control)


def write_results_csv(results: Sequence[ScenarioResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in results:
            w.writerow(r.row())


def write_manifest(path, seed: int, config: dict, design_fingerprint: str | None, results_path) -> dict:
    manifest = {
        "seed": seed,
        "config_hash": fingerprint_of(config),
        "config": config,
        "design_fingerprint": design_fingerprint,
        "results": str(results_path),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest
