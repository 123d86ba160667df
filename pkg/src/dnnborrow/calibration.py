"""Critical values that keep the family-wise error rate at ``alpha``.

For each null configuration (only endpoint 1 null, only endpoint 2 null, both
null) a grid of null rate settings is drawn. At every grid point the
promise-probability surrogate is evaluated on ``B'`` simulated trials and the
conservative upper-``alpha`` order statistic of the relevant statistic is
recorded. Small networks then map the null rates to these critical values.

Under the global null the statistic is ``max(S1, S2)``: a common cutoff ``c``
satisfies ``P(S1 > c or S2 > c) = P(max(S1, S2) > c)``, which is
non-increasing and right-continuous in ``c``, so its order statistic solves
the union constraint exactly.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import GridExhausted, InvalidRange
from .mlp import MlpModel, TrainConfig, candidate_grid, forward
from .rng import stream
from .surrogate import SurrogateFit, select_and_fit
from .types import ParameterSpaces


class NullHypothesisKind(str, enum.Enum):
    H1 = "H1"
    H2 = "H2"
    H12 = "H12"

    @property
    def index(self) -> int:
        return ["H1", "H2", "H12"].index(self.value)

    @property
    def feature_dim(self) -> int:
        return 2 if self is NullHypothesisKind.H12 else 3


FEATURE_NAMES = {
    NullHypothesisKind.H1: ("psi_ct1", "psi_c2", "delta2"),
    NullHypothesisKind.H2: ("psi_c1", "delta1", "psi_ct2"),
    NullHypothesisKind.H12: ("psi_ct1", "psi_ct2"),
}


def feature_box(kind: NullHypothesisKind, spaces: ParameterSpaces) -> np.ndarray:
    """``(d, 2)`` lower/upper bounds of the null features for ``kind``."""
    (c1, c2), (e1, e2) = spaces.control_space, spaces.effect_space
    kind = NullHypothesisKind(kind)
    if kind is NullHypothesisKind.H1:
        box = [c1, c2, e2]
    elif kind is NullHypothesisKind.H2:
        box = [c1, e1, c2]
    else:
        box = [c1, c2]
    return np.array(box, dtype=float)


def null_rates(kind: NullHypothesisKind, features: np.ndarray) -> np.ndarray:
    """Map null features to ``(psi_c1, psi_c2, psi_t1, psi_t2)`` rows."""
    f = np.atleast_2d(np.asarray(features, dtype=float))
    kind = NullHypothesisKind(kind)
    if kind is NullHypothesisKind.H1:
        return np.column_stack([f[:, 0], f[:, 1], f[:, 0], f[:, 1] + f[:, 2]])
    if kind is NullHypothesisKind.H2:
        return np.column_stack([f[:, 0], f[:, 2], f[:, 0] + f[:, 1], f[:, 2]])
    return np.column_stack([f[:, 0], f[:, 1], f[:, 0], f[:, 1]])


def draw_null_grid(kind: NullHypothesisKind, spaces: ParameterSpaces, B_k: int, seed: int) -> np.ndarray:
    """``B_k`` null feature vectors drawn uniformly over the feature box."""
    kind = NullHypothesisKind(kind)
    box = feature_box(kind, spaces)
    if np.any(box[:, 0] > box[:, 1]):
        raise InvalidRange("lower bound above upper bound")
    corners = null_rates(kind, box.T)
    lo_rates = null_rates(kind, box[:, 0])
    hi_rates = null_rates(kind, box[:, 1])
    if np.any(np.minimum(lo_rates, hi_rates) < 0) or np.any(np.maximum(lo_rates, hi_rates) > 1) or np.any(
        (corners < 0) | (corners > 1)
    ):
        raise InvalidRange("null treatment rates leave (0, 1)")
    rng = stream(seed, "null_grid", kind.index)
    u = rng.random((B_k, box.shape[0]))
    return box[:, 0] + (box[:, 1] - box[:, 0]) * u


def order_statistic(values: np.ndarray, alpha: float) -> float:
    """Upper-``alpha`` order statistic at rank ``ceil((1 - alpha)(n + 1))``, capped at ``n``."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    n = v.size
    rank = math.ceil((1.0 - alpha) * (n + 1) - 1e-9)
    rank = min(max(rank, 1), n)
    return float(v[rank - 1])


def _statistic(kind: NullHypothesisKind, s_hat: np.ndarray) -> np.ndarray:
    if kind is NullHypothesisKind.H1:
        return s_hat[:, 0]
    if kind is NullHypothesisKind.H2:
        return s_hat[:, 1]
    return s_hat.max(axis=1)


def as_callable(f_s) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(f_s, MlpModel):
        return lambda x: forward(f_s, x)
    return f_s


def simulate_s_hat(rates, f_s, n_control: int, n_treatment: int, n_sim: int, rng) -> np.ndarray:
    """Surrogate promise probabilities on ``n_sim`` trials simulated at ``rates``."""
    rates = np.asarray(rates, dtype=float)
    rc = rng.binomial(n_control, rates[:2], size=(n_sim, 2))
    rt = rng.binomial(n_treatment, rates[2:], size=(n_sim, 2))
    x = np.hstack([rc / n_control, rt / n_treatment])
    return np.asarray(as_callable(f_s)(x), dtype=float)


def empirical_critical_value(
    kind: NullHypothesisKind,
    rates: np.ndarray,
    f_s,
    n_control: int,
    n_treatment: int,
    n_sim: int,
    alpha: float,
    seed: int | np.random.Generator,
) -> float:
    """Critical value for one null feature vector ``rates`` (see module docstring)."""
    kind = NullHypothesisKind(kind)
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "null_sim", kind.index)
    full = null_rates(kind, rates)[0]
    s_hat = simulate_s_hat(full, f_s, n_control, n_treatment, n_sim, rng)
    return order_statistic(_statistic(kind, s_hat), alpha)


def label_null_grid(kind, grid, f_s, n_control, n_treatment, n_sim, alpha, seed) -> np.ndarray:
    kind = NullHypothesisKind(kind)
    return np.array(
        [
            empirical_critical_value(
                kind, g, f_s, n_control, n_treatment, n_sim, alpha, stream(seed, "null_sim", kind.index, p)
            )
            for p, g in enumerate(grid)
        ]
    )


@dataclass
class CriticalSurrogates:
    f1: MlpModel
    f2: MlpModel
    f12: MlpModel
    boxes: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)

    def model(self, kind) -> MlpModel:
        return {"H1": self.f1, "H2": self.f2, "H12": self.f12}[NullHypothesisKind(kind).value]

    def predict(self, kind, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Critical values at ``features`` clamped into the training box.

        Returns ``(values, clamped_flags)``.
        """
        kind = NullHypothesisKind(kind)
        f = np.atleast_2d(np.asarray(features, dtype=float))
        box = self.boxes[kind.value]
        clipped = np.clip(f, box[:, 0], box[:, 1])
        flags = np.any(clipped != f, axis=1)
        out = np.asarray(as_callable(self.model(kind))(clipped), dtype=float).reshape(len(clipped), -1)
        return out[:, 0], flags

    def write_audit(self, path) -> None:
        """CSV rows ``kind, features, empirical_c, surrogate_c`` for every grid point."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "features", "empirical_c", "surrogate_c"])
            for kind in NullHypothesisKind:
                grid = self.grids.get(kind.value)
                if grid is None:
                    continue
                pred = np.asarray(as_callable(self.model(kind))(grid), dtype=float).reshape(len(grid), -1)[:, 0]
                for g, lab, p in zip(grid, self.labels[kind.value], pred):
                    w.writerow([kind.value, " ".join(repr(float(v)) for v in g), repr(float(lab)), repr(float(p))])

    def to_dict(self) -> dict:
        return {
            "f1": self.f1.to_dict(),
            "f2": self.f2.to_dict(),
            "f12": self.f12.to_dict(),
            "boxes": {k: v.tolist() for k, v in self.boxes.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CriticalSurrogates":
        return cls(
            MlpModel.from_dict(doc["f1"]),
            MlpModel.from_dict(doc["f2"]),
            MlpModel.from_dict(doc["f12"]),
            boxes={k: np.array(v, dtype=float) for k, v in doc["boxes"].items()},
        )


def fit_critical_networks(
    f_s,
    spaces: ParameterSpaces,
    B_1: int,
    B_2: int,
    B_12: int,
    n_sim: int,
    alpha: float,
    cv_cfg: TrainConfig,
    train_cfg: TrainConfig,
    seed: int,
    n_control: int,
    n_treatment: int,
    candidates: dict | None = None,
    progress=None,
) -> CriticalSurrogates:
    """Label null grids with empirical critical values and fit one network per kind."""
    sizes = {"H1": B_1, "H2": B_2, "H12": B_12}
    models, boxes, grids, labels, fits = {}, {}, {}, {}, {}
    for kind in NullHypothesisKind:
        grid = draw_null_grid(kind, spaces, sizes[kind.value], seed)
        lab = label_null_grid(kind, grid, f_s, n_control, n_treatment, n_sim, alpha, seed)
        cands = (candidates or {}).get(kind.value) or candidate_grid(kind.feature_dim, 1)
        fit_res: SurrogateFit = select_and_fit(
            cands,
            grid,
            lab[:, None],
            replace(cv_cfg, seed=cv_cfg.seed + 10 * (kind.index + 1)),
            replace(train_cfg, seed=train_cfg.seed + 10 * (kind.index + 1)),
        )
        models[kind.value] = fit_res.model
        boxes[kind.value] = feature_box(kind, spaces)
        grids[kind.value] = grid
        labels[kind.value] = lab
        fits[kind.value] = fit_res
        if progress:
            progress(kind.value, fit_res)
    return CriticalSurrogates(models["H1"], models["H2"], models["H12"], boxes, grids, labels, fits)


def constant_cutoff_baseline(
    f_s,
    scenario_list: Sequence[Sequence[float]],
    n_control: int,
    n_treatment: int,
    n_sim: int,
    alpha: float,
    cutoff_grid: float | Sequence[float] = 5e-4,
    seed: int = 0,
) -> tuple[float, list[float]]:
    """Single cutoff covering every listed global-null rate pair.

    Returns ``(c_const, per_scenario_critical_values)``; ``c_const`` is the
    largest per-scenario value rounded up onto ``cutoff_grid`` (a step size or
    an explicit sorted grid).
    """
    if len(scenario_list) == 0:
        raise ValueError("need at least one scenario")
    per = [
        empirical_critical_value(
            NullHypothesisKind.H12, np.asarray(sc, dtype=float), f_s, n_control, n_treatment, n_sim, alpha,
            stream(seed, "baseline", k),
        )
        for k, sc in enumerate(scenario_list)
    ]
    worst = max(per)
    if np.isscalar(cutoff_grid):
        step = float(cutoff_grid)
        grid = np.round(np.arange(0.0, 1.0 + step / 2, step), 12)
    else:
        grid = np.sort(np.asarray(cutoff_grid, dtype=float))
    ok = grid[grid >= worst - 1e-12]
    if ok.size == 0:
        raise GridExhausted(f"no cutoff grid point at or above {worst}")
    return float(ok[0]), per


def rejection_rate_at(f_s, rates, cutoff, n_control, n_treatment, n_sim, seed) -> float:
    """Fraction of simulated trials where ``max(S1, S2) > cutoff``."""
    s_hat = simulate_s_hat(np.asarray(rates, dtype=float), f_s, n_control, n_treatment, n_sim, stream(seed, "probe"))
    return float(np.mean(s_hat.max(axis=1) > cutoff))
