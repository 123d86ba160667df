#
# Psoriasis case study: three historical secukinumab arms, 200 per arm.
#
# The control rates in the new trial either agree with history (S3) or
# conflict with it (S1 lower, S2 higher). Posterior-mean bias should be
# smallest when history and the new trial agree.
#

from pathlib import Path

import numpy as np

from dnnborrow.data import CASE_STUDY_HISTORY, CASE_STUDY_SCENARIOS, CASE_STUDY_STUDY_NAMES
from dnnborrow.pipeline import cached_design, case_study_config
from dnnborrow.simulation import CaseStudyConfig, run_case_study

CACHE = Path(__file__).resolve().parents[1] / ".cache" / "designs"


def run(replicates=10_000):
    for name, n, r in zip(CASE_STUDY_STUDY_NAMES, CASE_STUDY_HISTORY.n, CASE_STUDY_HISTORY.r):
        print(f"{name:>9}: n={n}  responders={r.tolist()}")
    design = cached_design(case_study_config(), CACHE)
    results = run_case_study(CaseStudyConfig(design, CASE_STUDY_SCENARIOS, replicates=replicates), seed=5)
    for r in results:
        print(
            f"{r.scenario.label:>8}  reject>=1 {100 * r.reject_h12_rate:5.1f}%  "
            f"bias {np.round(r.bias, 4)}  rmse {np.round(r.rmse, 4)}"
        )


if __name__ == "__main__":
    run()
