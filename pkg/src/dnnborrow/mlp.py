"""A small fully-connected network: ReLU hidden layers, dropout, MSE, RMSProp.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``x`` of shape
``(n, fan_in)`` maps through ``x @ W + b``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import NonFiniteLoss, ShapeMismatch
from .rng import stream
from .types import SCHEMA_VERSION, SchemaError


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden_widths: tuple[int, ...] = (60, 60)
    hidden_activation: str = "relu"
    output_activation: str = "sigmoid"
    dropout_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or self.output_dim < 1 or any(w < 1 for w in self.hidden_widths):
            raise ValueError("layer widths must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.hidden_activation != "relu":
            raise ValueError(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation not in ("sigmoid", "linear"):
            raise ValueError(f"unsupported output activation {self.output_activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_widths, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in self.layer_dims)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden_widths": list(self.hidden_widths),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
            "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpSpec":
        return cls(**doc)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    epochs: int = 1000
    learning_rate: float = 1e-3
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    seed: int = 0
    holdout_fraction: float = 0.1
    fold_count: int = 5

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0.0 < self.rmsprop_decay < 1.0:
            raise ValueError("rmsprop_decay must lie in (0, 1)")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in [0, 1)")
        if self.fold_count < 2:
            raise ValueError("fold_count must be >= 2")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        return cls(**doc)


@dataclass
class MlpModel:
    spec: MlpSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    training_summary: dict = field(default_factory=dict)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.spec,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            dict(self.training_summary),
        )

    def parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(self.weights, self.biases) for p in pair])

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "spec": self.spec.to_dict(),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "training_summary": self.training_summary,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpModel":
        allowed = {"schema_version", "spec", "weights", "biases", "training_summary"}
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise SchemaError("MlpModel: unsupported schema_version")
        if set(doc) != allowed:
            raise SchemaError(f"MlpModel: fields must be {sorted(allowed)}")
        spec = MlpSpec.from_dict(doc["spec"])
        weights = [np.array(w, dtype=float).reshape(a, b) for w, (a, b) in zip(doc["weights"], spec.layer_dims)]
        biases = [np.array(b, dtype=float).reshape(-1) for b in doc["biases"]]
        model = cls(spec, weights, biases, dict(doc["training_summary"]))
        _check_shapes(model)
        return model

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "MlpModel":
        return cls.from_dict(json.loads(text))


def _check_shapes(model: MlpModel) -> None:
    dims = model.spec.layer_dims
    if len(model.weights) != len(dims) or len(model.biases) != len(dims):
        raise ShapeMismatch("layer count differs from spec")
    for w, b, (a, c) in zip(model.weights, model.biases, dims):
        if w.shape != (a, c) or b.shape != (c,):
            raise ShapeMismatch(f"expected layer {(a, c)}, got {w.shape} / {b.shape}")


def init_model(spec: MlpSpec, seed: int) -> MlpModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    rng = stream(seed, "mlp_init")
    weights, biases = [], []
    for fan_in, fan_out in spec.layer_dims:
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(spec, weights, biases)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _as_batch(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.spec.input_dim:
        raise ShapeMismatch(f"expected input width {model.spec.input_dim}, got shape {x.shape}")
    return x


def _forward_cache(model, x, masks=None):
    acts = [x]
    pre = []
    h = x
    last = len(model.weights) - 1
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pre.append(z)
        if layer < last:
            h = np.maximum(z, 0.0)
            if masks is not None:
                h = h * masks[layer]
        elif model.spec.output_activation == "sigmoid":
            h = np.clip(_sigmoid(z), 0.0, 1.0)
        else:
            h = z
        acts.append(h)
    return pre, acts


def dropout_masks(model: MlpModel, n: int, rng: np.random.Generator) -> list[np.ndarray] | None:
    """Inverted-dropout masks (kept units scaled by 1/(1-rate)) for one batch."""
    rate = model.spec.dropout_rate
    if rate == 0.0:
        return None
    keep = 1.0 - rate
    return [(rng.random((n, w)) < keep) / keep for w in model.spec.hidden_widths]


def forward(model: MlpModel, x, mode: str = "infer", rng: np.random.Generator | None = None) -> np.ndarray:
    """Evaluate the network; ``mode="train"`` applies dropout drawn from ``rng``."""
    x = _as_batch(model, x)
    masks = None
    if mode == "train":
        if rng is None:
            raise ValueError("train mode needs a dropout stream")
        masks = dropout_masks(model, x.shape[0], rng)
    elif mode != "infer":
        raise ValueError(f"unknown mode {mode!r}")
    return _forward_cache(model, x, masks)[1][-1]


def loss_and_gradient(model: MlpModel, x, y, masks=None) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean squared error and its gradients ``(dW per layer, db per layer)``."""
    x = _as_batch(model, x)
    y = np.asarray(y, dtype=float).reshape(x.shape[0], -1)
    if y.shape[1] != model.spec.output_dim:
        raise ShapeMismatch(f"expected target width {model.spec.output_dim}, got {y.shape[1]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFiniteLoss("non-finite input or target")
    pre, acts = _forward_cache(model, x, masks)
    out = acts[-1]
    err = out - y
    with np.errstate(over="ignore", invalid="ignore"):
        mse = float(np.mean(err * err))
    if not np.isfinite(mse):
        raise NonFiniteLoss("non-finite loss")
    delta = 2.0 * err / err.size
    if model.spec.output_activation == "sigmoid":
        delta = delta * out * (1.0 - out)
    n_layers = len(model.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    for layer in range(n_layers - 1, -1, -1):
        gw[layer] = acts[layer].T @ delta
        gb[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ model.weights[layer].T
            if masks is not None:
                delta = delta * masks[layer - 1]
            delta = delta * (pre[layer - 1] > 0)
    return mse, gw, gb


def mse(model: MlpModel, x, y) -> float:
    out = forward(model, x)
    return float(np.mean((out - np.asarray(y, dtype=float).reshape(out.shape)) ** 2))


def _split_holdout(n, fraction, rng):
    order = rng.permutation(n)
    n_hold = int(round(fraction * n))
    if fraction > 0 and n_hold == 0 and n > 1:
        n_hold = 1
    return order[n_hold:], order[:n_hold]


def train(model: MlpModel, x, y, cfg: TrainConfig) -> MlpModel:
    """Mini-batch RMSProp on MSE; returns a new trained model.

    A ``holdout_fraction`` slice (seeded) is kept out of the updates and only
    used for the reported holdout MSE.
    """
    x = _as_batch(model, x)
    y = np.asarray(y, dtype=float).reshape(x.shape[0], -1)
    if x.shape[0] == 0:
        raise ValueError("empty dataset")
    split_rng = stream(cfg.seed, "mlp_shuffle", 0)
    fit_idx, hold_idx = _split_holdout(x.shape[0], cfg.holdout_fraction, split_rng)
    xf, yf = x[fit_idx], y[fit_idx]
    m = model.copy()
    sq_w = [np.zeros_like(w) for w in m.weights]
    sq_b = [np.zeros_like(b) for b in m.biases]
    shuffle_rng = stream(cfg.seed, "mlp_shuffle", 1)
    drop_rng = stream(cfg.seed, "dropout")
    rho, lr, eps = cfg.rmsprop_decay, cfg.learning_rate, cfg.rmsprop_epsilon
    n = xf.shape[0]
    bs = cfg.batch_size
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            masks = dropout_masks(m, idx.size, drop_rng)
            try:
                _, gw, gb = loss_and_gradient(m, xf[idx], yf[idx], masks)
            except NonFiniteLoss as exc:
                raise NonFiniteLoss(f"training diverged at epoch {epoch}: {exc}", epoch=epoch) from None
            for params, grads, sq in ((m.weights, gw, sq_w), (m.biases, gb, sq_b)):
                for p, g, s in zip(params, grads, sq):
                    s *= rho
                    s += (1.0 - rho) * g * g
                    p -= lr * g / np.sqrt(s + eps)
        if not all(np.all(np.isfinite(w)) for w in m.weights):
            raise NonFiniteLoss(f"non-finite weights at epoch {epoch}", epoch=epoch)
    m.training_summary = {
        "train_mse": mse(m, xf, yf),
        "holdout_mse": mse(m, x[hold_idx], y[hold_idx]) if hold_idx.size else None,
        "n_train": int(n),
        "n_holdout": int(hold_idx.size),
        "epochs": cfg.epochs,
    }
    return m


def fit(spec: MlpSpec, x, y, cfg: TrainConfig) -> MlpModel:
    return train(init_model(spec, cfg.seed), x, y, cfg)


def cross_validate(
    candidates: Sequence[MlpSpec], x, y, cfg: TrainConfig
) -> tuple[MlpSpec, list[float]]:
    """K-fold selection of the candidate with the smallest mean validation MSE.

    Ties go to fewer parameters, then to the earlier candidate. Candidates
    whose training fails score ``inf``.
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(x.shape[0], -1)
    k = min(cfg.fold_count, x.shape[0])
    folds = np.array_split(stream(cfg.seed, "cv").permutation(x.shape[0]), k)
    scores = []
    for c, spec in enumerate(candidates):
        errs = []
        try:
            for f, val_idx in enumerate(folds):
                tr_idx = np.concatenate([folds[g] for g in range(k) if g != f])
                fold_cfg = replace(cfg, seed=_derived_seed(cfg.seed, c, f), holdout_fraction=0.0)
                model = fit(spec, x[tr_idx], y[tr_idx], fold_cfg)
                errs.append(mse(model, x[val_idx], y[val_idx]))
            score = float(np.mean(errs))
            if not np.isfinite(score):
                score = float("inf")
        except (NonFiniteLoss, FloatingPointError, ValueError):
            score = float("inf")
        scores.append(score)
    best = min(range(len(candidates)), key=lambda c: (scores[c], candidates[c].n_params, c))
    return candidates[best], scores


def _derived_seed(seed: int, *path: int) -> int:
    return int(stream(seed, "cv", *path).integers(0, 2**63 - 1))


def candidate_grid(
    input_dim: int,
    output_dim: int,
    depths: Sequence[int] = (1, 2, 3),
    widths: Sequence[int] = (20, 50, 60),
    dropouts: Sequence[float] = (0.0, 0.1),
    output_activation: str = "sigmoid",
) -> list[MlpSpec]:
    return [
        MlpSpec(input_dim, output_dim, (w,) * d, "relu", output_activation, p)
        for d in depths
        for w in widths
        for p in dropouts
    ]
