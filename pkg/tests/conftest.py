import os
import sys
from pathlib import Path

import numpy as np
import pytest

from dnnborrow.calibration import CriticalSurrogates, feature_box
from dnnborrow.data import SIMULATION_SPACES, SIMULATION_HISTORY
from dnnborrow.design import TrainedDesign
from dnnborrow.mcmc import McmcConfig
from dnnborrow.types import EndpointConfig, HierPriorConfig

CACHE_DIR = Path(os.environ.get("DNNBORROW_CACHE", Path(__file__).resolve().parents[1] / ".cache" / "designs"))


def constant(value, width=1):
    value = np.broadcast_to(np.asarray(value, dtype=float), (width,))
    return lambda x: np.tile(value, (len(np.atleast_2d(x)), 1))


def make_stub_design(f_s, c1=0.95, c2=0.95, c12=0.97, f_p=None, c_const=0.975, n=150, mcmc_cfg=McmcConfig()):
    """Design whose networks are plain callables, for plumbing tests."""
    crit = CriticalSurrogates(
        f1=c1 if callable(c1) else constant(c1),
        f2=c2 if callable(c2) else constant(c2),
        f12=c12 if callable(c12) else constant(c12),
        boxes={k: feature_box(k, SIMULATION_SPACES) for k in ("H1", "H2", "H12")},
    )
    return TrainedDesign(
        endpoint_cfg=EndpointConfig(),
        spaces=SIMULATION_SPACES,
        history=SIMULATION_HISTORY,
        n_control=n,
        n_treatment=n,
        prior=HierPriorConfig.default(2),
        f_s=f_s,
        f_p=f_p or (lambda x: np.asarray(x, dtype=float)),
        critical=crit,
        c_const=c_const,
        mcmc_cfg=mcmc_cfg,
    )


def monotone_s(x):
    x = np.atleast_2d(x)
    return 1 / (1 + np.exp(-30 * (x[:, 2:] - x[:, :2])))


@pytest.fixture
def stub_design():
    return make_stub_design


@pytest.fixture(scope="session")
def desk_design():
    """Desk-scale design trained on the simulation setting (cached on disk)."""
    from dnnborrow.pipeline import DesignConfig, cached_design

    return cached_design(DesignConfig(), CACHE_DIR)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
