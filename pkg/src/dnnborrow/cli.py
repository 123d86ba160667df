"""Command-line interface: ``dnnborrow {train,decide,simulate,validate,inspect}``.

Exit codes: 0 success, 2 invalid input, 3 training failure, 4 design
fingerprint mismatch, 5 observation does not match the design. Failures
print a JSON object ``{"error", "message", "exit_code"}`` on standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .decision import DecisionMode, decide, surrogate_vs_mcmc_report
from .design import TrainedDesign
from .errors import DesignMismatch, DnnBorrowError, FingerprintMismatch, InvalidRange
from .pipeline import FULL_SCALE, DesignConfig, train_design
from .simulation import Scenario, run_operating_characteristics, write_manifest, write_results_csv
from .surrogate import TrainingSet
from .types import SCHEMA_VERSION, CurrentTrialObservation, SchemaError, validate_dataset

EXIT_INVALID = 2
EXIT_TRAINING = 3
EXIT_FINGERPRINT = 4
EXIT_MISMATCH = 5


class CliError(Exception):
    def __init__(self, code: int, exc: BaseException):
        super().__init__(str(exc))
        self.code = code
        self.exc = exc


def _fail(code: int, exc: BaseException) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(doc), file=sys.stderr)
    return code


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_INVALID, exc) from exc


def _load_design(path) -> TrainedDesign:
    try:
        return TrainedDesign.load(path)
    except FingerprintMismatch as exc:
        raise CliError(EXIT_FINGERPRINT, exc) from exc
    except OSError as exc:
        raise CliError(EXIT_INVALID, exc) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_FINGERPRINT, FingerprintMismatch(f"unreadable design: {exc}")) from exc


def _emit(doc, out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out:
        with open(out, "x") as fh:
            fh.write(text + "\n")
    print(text)


def cmd_train(args) -> int:
    doc = _read_json(args.config)
    try:
        cfg = DesignConfig.from_dict(doc, Path(args.config).resolve().parent)
    except (SchemaError, KeyError, TypeError, ValueError, OSError) as exc:
        raise CliError(EXIT_INVALID, exc) from exc
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.threads is not None:
        cfg = replace(cfg, workers=max(1, args.threads))
    if args.full_scale:
        cfg = cfg.full_scale()
    problems = cfg.violations()
    if problems:
        raise CliError(EXIT_INVALID, SchemaError("; ".join(problems)))
    if Path(args.out).exists():
        raise CliError(EXIT_INVALID, FileExistsError(f"{args.out} exists; designs are never overwritten"))
    training = TrainingSet.read_csv(args.training_set) if args.training_set else None
    try:
        design = train_design(cfg, training)
    except (DnnBorrowError, FloatingPointError, ValueError) as exc:
        raise CliError(EXIT_TRAINING, exc) from exc
    fp = design.save(args.out)
    prov = design.provenance
    print(
        json.dumps(
            {
                "design": str(args.out),
                "fingerprint": fp,
                "f_s_train_mse": prov["f_s_train_mse"],
                "f_p_train_mse": prov["f_p_train_mse"],
                "critical_train_mse": prov["critical_train_mse"],
                "c_const": design.c_const,
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def cmd_decide(args) -> int:
    design = _load_design(args.design)
    try:
        cur = CurrentTrialObservation.from_dict(_read_json(args.observation))
    except (SchemaError, KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_INVALID, exc) from exc
    report = validate_dataset(design.history, cur, design.endpoint_cfg)
    if not report.ok:
        raise CliError(EXIT_INVALID, SchemaError("; ".join(report.violations)))
    t0 = time.perf_counter()
    try:
        outcome = decide(design, cur, args.mode, fingerprint=design.fingerprint)
    except DesignMismatch as exc:
        raise CliError(EXIT_MISMATCH, exc) from exc
    doc = outcome.to_dict()
    doc["elapsed_seconds"] = time.perf_counter() - t0
    _emit(doc, args.out)
    return 0


def _read_scenarios(path, full_scale: bool) -> list[Scenario]:
    doc = _read_json(path)
    try:
        if doc.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise SchemaError("scenario file: unsupported schema_version")
        scenarios = [Scenario.from_dict(s) for s in doc["scenarios"]]
    except (SchemaError, InvalidRange, KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CliError(EXIT_INVALID, exc) from exc
    if full_scale:
        scenarios = [replace(s, replicates=FULL_SCALE["replicates"]) for s in scenarios]
    return scenarios


def cmd_simulate(args) -> int:
    design = _load_design(args.design)
    scenarios = _read_scenarios(args.scenarios, args.full_scale)
    seed = 0 if args.seed is None else args.seed
    results = run_operating_characteristics(design, scenarios, seed, args.mode)
    write_results_csv(results, args.out)
    config = {"scenarios": [s.to_dict() for s in scenarios], "mode": args.mode}
    write_manifest(str(args.out) + ".manifest.json", seed, config, design.fingerprint, args.out)
    print(Path(args.out).read_text(), end="")
    return 0


def probe_grid(design: TrainedDesign, size: int = 5, effect: float = 0.1) -> list[CurrentTrialObservation]:
    """``size x size`` observations spanning the control box, treatment ahead by ``effect``."""
    (a1, b1), (a2, b2) = design.spaces.control_space
    q = (np.arange(size) + 0.5) / size
    out = []
    for p1 in a1 + (b1 - a1) * q:
        for p2 in a2 + (b2 - a2) * q:
            rc = [int(round(p * design.n_control)) for p in (p1, p2)]
            rt = [int(round(min(p + effect, 1.0) * design.n_treatment)) for p in (p1, p2)]
            out.append(CurrentTrialObservation(design.n_control, design.n_treatment, tuple(rc), tuple(rt)))
    return out


def cmd_validate(args) -> int:
    design = _load_design(args.design)
    mcmc_cfg = design.mcmc_cfg if args.seed is None else replace(design.mcmc_cfg, seed=args.seed)
    reports = [surrogate_vs_mcmc_report(design, cur, mcmc_cfg) for cur in probe_grid(design, args.grid)]
    div = np.array([r["divergence"] for r in reports])
    doc = {
        "design_fingerprint": design.fingerprint,
        "probes": len(reports),
        "divergence_quantiles": {
            f"q{int(q * 100)}": np.quantile(div, q, axis=0).tolist() for q in (0.0, 0.25, 0.5, 0.75, 1.0)
        },
        "median_divergence": float(np.median(div)),
        "surrogate_seconds_median": float(np.median([r["surrogate_seconds"] for r in reports])),
        "mcmc_seconds_median": float(np.median([r["mcmc_seconds"] for r in reports])),
        "reports": reports,
    }
    _emit(doc, args.out)
    return 0


def cmd_inspect(args) -> int:
    design = _load_design(args.design)
    nets = {"f_s": design.f_s, "f_p": design.f_p}
    if design.critical is not None:
        nets.update({"f1": design.critical.f1, "f2": design.critical.f2, "f12": design.critical.f12})
    doc = {
        "fingerprint": design.fingerprint,
        "n_control": design.n_control,
        "n_treatment": design.n_treatment,
        "studies": len(design.history.studies),
        "c_const": design.c_const,
        "networks": {
            k: {"hidden_widths": list(m.spec.hidden_widths), "dropout_rate": m.spec.dropout_rate, "n_params": m.spec.n_params}
            for k, m in nets.items()
        },
        "provenance": {k: v for k, v in design.provenance.items() if k != "config"},
    }
    _emit(doc, None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dnnborrow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--full-scale", action="store_true")

    t = sub.add_parser("train", help="train and lock a design")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--training-set", default=None, help="reuse a labeled training-set CSV")
    common(t)
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("decide", help="decide on an observed trial")
    d.add_argument("--design", required=True)
    d.add_argument("--observation", required=True)
    d.add_argument("--mode", choices=[m.value for m in DecisionMode], default="surrogate")
    d.add_argument("--out", default=None)
    common(d)
    d.set_defaults(func=cmd_decide)

    s = sub.add_parser("simulate", help="operating characteristics for a scenario file")
    s.add_argument("--design", required=True)
    s.add_argument("--scenarios", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", choices=["surrogate", "constant_baseline"], default="surrogate")
    common(s)
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="surrogate against fresh MCMC on a probe grid")
    v.add_argument("--design", required=True)
    v.add_argument("--grid", type=int, default=5)
    v.add_argument("--out", default=None)
    common(v)
    v.set_defaults(func=cmd_validate)

    i = sub.add_parser("inspect", help="summarize a design file")
    i.add_argument("--design", required=True)
    common(i)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except CliError as exc:
        return _fail(exc.code, exc.exc)
    except FileExistsError as exc:
        return _fail(EXIT_INVALID, exc)


if __name__ == "__main__":
    sys.exit(main())
