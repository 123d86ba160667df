"""Locked design files: every trained network plus the inputs that produced them.

The file is a JSON document ``{"schema_version", "content", "fingerprint"}``
where ``fingerprint`` is the SHA-256 of the canonical bytes of ``content``
(sorted keys, compact separators). Loading recomputes the hash and refuses
any file whose content was altered.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .calibration import CriticalSurrogates
from .errors import FingerprintMismatch
from .mcmc import McmcConfig
from .mlp import MlpModel
from .types import (
    SCHEMA_VERSION,
    EndpointConfig,
    HierPriorConfig,
    HistoricalDataset,
    ParameterSpaces,
    SchemaError,
)


def canonical_bytes(doc) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def fingerprint_of(doc) -> str:
    return hashlib.sha256(canonical_bytes(doc)).hexdigest()


@dataclass
class TrainedDesign:
    endpoint_cfg: EndpointConfig
    spaces: ParameterSpaces
    history: HistoricalDataset
    n_control: int
    n_treatment: int
    prior: HierPriorConfig
    f_s: MlpModel
    f_p: MlpModel
    critical: CriticalSurrogates | None = None
    c_const: float | None = None
    mcmc_cfg: McmcConfig = field(default_factory=McmcConfig)
    provenance: dict = field(default_factory=dict)

    @property
    def surrogate_ready(self) -> bool:
        return self.critical is not None

    def content(self) -> dict:
        return {
            "endpoint_config": self.endpoint_cfg.to_dict(),
            "parameter_spaces": self.spaces.to_dict(),
            "history": self.history.to_dict(),
            "n_control": int(self.n_control),
            "n_treatment": int(self.n_treatment),
            "prior": self.prior.to_dict(),
            "f_s": self.f_s.to_dict(),
            "f_p": self.f_p.to_dict(),
            "critical": None if self.critical is None else self.critical.to_dict(),
            "c_const": self.c_const,
            "mcmc_config": self.mcmc_cfg.to_dict(),
            "provenance": self.provenance,
        }

    @property
    def fingerprint(self) -> str:
        return fingerprint_of(self.content())

    def to_document(self) -> dict:
        content = self.content()
        return {"schema_version": SCHEMA_VERSION, "content": content, "fingerprint": fingerprint_of(content)}

    def dumps(self) -> str:
        return canonical_bytes(self.to_document()).decode("utf-8")

    def save(self, path) -> str:
        """Write the design; refuses to overwrite an existing file."""
        path = Path(path)
        with open(path, "x") as fh:
            fh.write(self.dumps())
        return self.fingerprint

    @classmethod
    def from_document(cls, doc: dict) -> "TrainedDesign":
        if set(doc) != {"schema_version", "content", "fingerprint"}:
            raise SchemaError("TrainedDesign: fields must be schema_version, content, fingerprint")
        if doc["schema_version"] != SCHEMA_VERSION:
            raise SchemaError("TrainedDesign: unsupported schema_version")
        c = doc["content"]
        if fingerprint_of(c) != doc["fingerprint"]:
            raise FingerprintMismatch("design content does not match its fingerprint")
        return cls(
            endpoint_cfg=EndpointConfig.from_dict(c["endpoint_config"]),
            spaces=ParameterSpaces.from_dict(c["parameter_spaces"]),
            history=HistoricalDataset.from_dict(c["history"]),
            n_control=int(c["n_control"]),
            n_treatment=int(c["n_treatment"]),
            prior=HierPriorConfig.from_dict(c["prior"]),
            f_s=MlpModel.from_dict(c["f_s"]),
            f_p=MlpModel.from_dict(c["f_p"]),
            critical=None if c["critical"] is None else CriticalSurrogates.from_dict(c["critical"]),
            c_const=c["c_const"],
            mcmc_cfg=McmcConfig.from_dict(c["mcmc_config"]),
            provenance=c["provenance"],
        )

    @classmethod
    def loads(cls, text: str) -> "TrainedDesign":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FingerprintMismatch(f"design file is not valid JSON: {exc}") from exc
        return cls.from_document(doc)

    @classmethod
    def load(cls, path) -> "TrainedDesign":
        return cls.loads(Path(path).read_text())
