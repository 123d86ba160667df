"""Domain types shared across the package.

All containers are frozen dataclasses. Counts are stored as exact integers;
rates are always derived on demand. Every type serializes to a JSON-ready
dict carrying ``"schema_version": 1`` and rejects unknown fields on load.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """Raised when a serialized document does not match its schema."""


def _check_fields(doc: dict, allowed: set[str], kind: str) -> None:
    if not isinstance(doc, dict):
        raise SchemaError(f"{kind}: expected a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"{kind}: unsupported schema_version {version!r}")
    unknown = set(doc) - allowed - {"schema_version"}
    if unknown:
        raise SchemaError(f"{kind}: unknown fields {sorted(unknown)}")
    missing = allowed - set(doc)
    if missing:
        raise SchemaError(f"{kind}: missing fields {sorted(missing)}")


def _int_tuple(values: Sequence[Any]) -> tuple[int, ...]:
    out = []
    for v in values:
        if isinstance(v, bool) or int(v) != v:
            raise SchemaError(f"expected integer count, got {v!r}")
        out.append(int(v))
    return tuple(out)


@dataclass(frozen=True)
class EndpointConfig:
    """Endpoint-level design constants.

    ``promise_margins`` are the rate-difference margins used in the promise
    probability; ``treatment_prior`` holds one ``(a, b)`` beta prior per
    endpoint.
    """

    endpoint_count: int = 2
    promise_margins: tuple[float, ...] = (0.0, 0.0)
    treatment_prior: tuple[tuple[float, float], ...] = ((1.0, 1.0), (1.0, 1.0))
    alpha: float = 0.05

    def violations(self) -> list[str]:
        out = []
        if self.endpoint_count < 1:
            out.append("endpoint_count must be >= 1")
        if len(self.promise_margins) != self.endpoint_count:
            out.append("promise_margins length differs from endpoint_count")
        if len(self.treatment_prior) != self.endpoint_count:
            out.append("treatment_prior length differs from endpoint_count")
        for m in self.promise_margins:
            if not -1.0 < m < 1.0:
                out.append(f"promise margin {m} outside (-1, 1)")
        for ab in self.treatment_prior:
            if len(ab) != 2 or not (ab[0] > 0 and ab[1] > 0):
                out.append(f"treatment prior {ab} must be a pair of positive reals")
        if not 0.0 < self.alpha < 1.0:
            out.append(f"alpha {self.alpha} outside (0, 1)")
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "endpoint_count": self.endpoint_count,
            "promise_margins": list(self.promise_margins),
            "treatment_prior": [list(ab) for ab in self.treatment_prior],
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EndpointConfig":
        _check_fields(
            doc, {"endpoint_count", "promise_margins", "treatment_prior", "alpha"}, "EndpointConfig"
        )
        return cls(
            endpoint_count=int(doc["endpoint_count"]),
            promise_margins=tuple(float(m) for m in doc["promise_margins"]),
            treatment_prior=tuple((float(a), float(b)) for a, b in doc["treatment_prior"]),
            alpha=float(doc["alpha"]),
        )


@dataclass(frozen=True)
class Study:
    n: int
    r: tuple[int, ...]


@dataclass(frozen=True)
class HistoricalDataset:
    """Control-arm counts from ``J`` completed studies, one ``n`` per study."""

    studies: tuple[Study, ...]

    @classmethod
    def from_arrays(cls, n: Sequence[int], r: Sequence[Sequence[int]]) -> "HistoricalDataset":
        """Build from per-study sizes ``n`` and an endpoint-major count table ``r[i][j]``."""
        r = [list(row) for row in r]
        studies = tuple(
            Study(int(nj), tuple(int(row[j]) for row in r)) for j, nj in enumerate(n)
        )
        return cls(studies)

    @property
    def n(self) -> np.ndarray:
        return np.array([s.n for s in self.studies], dtype=np.int64)

    @property
    def r(self) -> np.ndarray:
        """Counts as a ``(J, I)`` integer array."""
        return np.array([s.r for s in self.studies], dtype=np.int64)

    @property
    def endpoint_count(self) -> int:
        return len(self.studies[0].r) if self.studies else 0

    def pooled_rates(self) -> np.ndarray:
        return self.r.sum(axis=0) / self.n.sum()

    def violations(self) -> list[str]:
        out = []
        if len(self.studies) < 1:
            out.append("historical dataset needs at least one study")
            return out
        dims = {len(s.r) for s in self.studies}
        if len(dims) > 1:
            out.append("historical studies disagree on endpoint count")
        for j, s in enumerate(self.studies):
            if s.n < 1:
                out.append(f"study {j}: sample size must be positive")
            for i, rij in enumerate(s.r):
                if rij < 0:
                    out.append(f"study {j} endpoint {i}: negative responders")
                elif rij > s.n:
                    out.append(f"study {j} endpoint {i}: responders exceed sample size")
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "studies": [{"n": s.n, "r": list(s.r)} for s in self.studies],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HistoricalDataset":
        _check_fields(doc, {"studies"}, "HistoricalDataset")
        studies = []
        for s in doc["studies"]:
            if set(s) != {"n", "r"}:
                raise SchemaError(f"HistoricalDataset: study fields must be n, r; got {sorted(s)}")
            studies.append(Study(_int_tuple([s["n"]])[0], _int_tuple(s["r"])))
        return cls(tuple(studies))


@dataclass(frozen=True)
class CurrentTrialObservation:
    n_control: int
    n_treatment: int
    r_control: tuple[int, ...]
    r_treatment: tuple[int, ...]

    def violations(self) -> list[str]:
        out = []
        if self.n_control < 1:
            out.append("n_control must be positive")
        if self.n_treatment < 1:
            out.append("n_treatment must be positive")
        if len(self.r_control) != len(self.r_treatment):
            out.append("control and treatment endpoint counts differ")
        for i, r in enumerate(self.r_control):
            if r < 0:
                out.append(f"control endpoint {i}: negative responders")
            elif r > self.n_control:
                out.append(f"control endpoint {i}: responders exceed sample size")
        for i, r in enumerate(self.r_treatment):
            if r < 0:
                out.append(f"treatment endpoint {i}: negative responders")
            elif r > self.n_treatment:
                out.append(f"treatment endpoint {i}: responders exceed sample size")
        return out

    @property
    def endpoint_count(self) -> int:
        return len(self.r_control)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n_control": self.n_control,
            "n_treatment": self.n_treatment,
            "r_control": list(self.r_control),
            "r_treatment": list(self.r_treatment),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CurrentTrialObservation":
        _check_fields(
            doc, {"n_control", "n_treatment", "r_control", "r_treatment"}, "CurrentTrialObservation"
        )
        return cls(
            n_control=_int_tuple([doc["n_control"]])[0],
            n_treatment=_int_tuple([doc["n_treatment"]])[0],
            r_control=_int_tuple(doc["r_control"]),
            r_treatment=_int_tuple(doc["r_treatment"]),
        )


@dataclass(frozen=True)
class ParameterSpaces:
    """Uniform sampling boxes: control rates in (0, 1), effects in (-1, 1)."""

    control_space: tuple[tuple[float, float], ...] = ((0.2, 0.7), (0.1, 0.6))
    effect_space: tuple[tuple[float, float], ...] = ((-0.1, 0.2), (-0.1, 0.2))

    def violations(self) -> list[str]:
        out = []
        if len(self.control_space) != len(self.effect_space):
            out.append("control_space and effect_space lengths differ")
        for lo, hi in self.control_space:
            if not (0.0 < lo < hi < 1.0):
                out.append(f"control interval ({lo}, {hi}) must satisfy 0 < lo < hi < 1")
        for lo, hi in self.effect_space:
            if not (-1.0 < lo < hi < 1.0):
                out.append(f"effect interval ({lo}, {hi}) must satisfy -1 < lo < hi < 1")
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "control_space": [list(iv) for iv in self.control_space],
            "effect_space": [list(iv) for iv in self.effect_space],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ParameterSpaces":
        _check_fields(doc, {"control_space", "effect_space"}, "ParameterSpaces")
        return cls(
            control_space=tuple((float(a), float(b)) for a, b in doc["control_space"]),
            effect_space=tuple((float(a), float(b)) for a, b in doc["effect_space"]),
        )


@dataclass(frozen=True)
class HierPriorConfig:
    """Priors of the hierarchical control model.

    ``theta_precision`` is the precision of the independent zero-mean normal
    prior on each component of the logit-scale mean; ``sigma0`` and
    ``wishart_df`` parameterize the inverse-Wishart prior on the covariance.
    """

    theta_precision: float = 0.01
    sigma0: tuple[tuple[float, ...], ...] = ((1.0, 0.0), (0.0, 1.0))
    wishart_df: float = 3.0

    @classmethod
    def default(cls, endpoint_count: int = 2) -> "HierPriorConfig":
        eye = tuple(tuple(float(i == j) for j in range(endpoint_count)) for i in range(endpoint_count))
        return cls(0.01, eye, float(endpoint_count + 1))

    @property
    def sigma0_array(self) -> np.ndarray:
        return np.array(self.sigma0, dtype=float)

    @property
    def dim(self) -> int:
        return len(self.sigma0)

    def violations(self, tol: float = 1e-12) -> list[str]:
        out = []
        if not self.theta_precision > 0:
            out.append("theta_precision must be positive")
        s0 = self.sigma0_array
        if s0.ndim != 2 or s0.shape[0] != s0.shape[1]:
            out.append(f"sigma0 must be square, got shape {s0.shape}")
            return out
        if not np.allclose(s0, s0.T):
            out.append("sigma0 must be symmetric")
        elif np.linalg.eigvalsh(s0).min() <= tol:
            out.append("sigma0 must be positive definite")
        if self.wishart_df < s0.shape[0]:
            out.append("wishart_df must be >= endpoint count")
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "theta_precision": self.theta_precision,
            "sigma0": [list(row) for row in self.sigma0],
            "wishart_df": self.wishart_df,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HierPriorConfig":
        _check_fields(doc, {"theta_precision", "sigma0", "wishart_df"}, "HierPriorConfig")
        return cls(
            theta_precision=float(doc["theta_precision"]),
            sigma0=tuple(tuple(float(x) for x in row) for row in doc["sigma0"]),
            wishart_df=float(doc["wishart_df"]),
        )


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_dataset(
    hist: HistoricalDataset, cur: CurrentTrialObservation, cfg: EndpointConfig
) -> ValidationReport:
    """Check every structural invariant and dimension agreement.

    Never raises on malformed content; all problems land in the report.
    """
    found: list[str] = []
    for name, obj in (("history", hist), ("observation", cur), ("endpoint config", cfg)):
        try:
            found.extend(f"{name}: {v}" for v in obj.violations())
        except Exception as exc:  # malformed object contents
            found.append(f"{name}: malformed ({exc})")
    try:
        dims = {
            "history": hist.endpoint_count,
            "observation": cur.endpoint_count,
            "endpoint config": cfg.endpoint_count,
        }
        if len(set(dims.values())) > 1:
            found.append(f"endpoint dimensions disagree: {dims}")
    except Exception as exc:
        found.append(f"dimension check failed ({exc})")
    return ValidationReport(tuple(found))


def empirical_rates(cur: CurrentTrialObservation) -> tuple[np.ndarray, np.ndarray]:
    """Observed responder fractions ``(control_rates, treatment_rates)``."""
    rc = np.asarray(cur.r_control, dtype=float) / cur.n_control
    rt = np.asarray(cur.r_treatment, dtype=float) / cur.n_treatment
    return rc, rt
