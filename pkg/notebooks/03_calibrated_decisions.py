#
# Critical values, decisions and operating characteristics.
#
# Loads (or trains, roughly 15 minutes on one core) the desk-scale design,
# decides for one observed trial, and then simulates the error rates and power
# for the rows of the simulation table alongside the single constant cutoff.
#

from pathlib import Path

from dnnborrow.data import SIMULATION_TABLE_ROWS
from dnnborrow.decision import decide
from dnnborrow.pipeline import DesignConfig, cached_design
from dnnborrow.simulation import Scenario, compare_power_preservation
from dnnborrow.types import CurrentTrialObservation

CACHE = Path(__file__).resolve().parents[1] / ".cache" / "designs"


def run(replicates=10_000):
    design = cached_design(DesignConfig(), CACHE, progress=lambda done, total: print(f"labeling {done}/{total}"))
    print("design fingerprint", design.fingerprint[:16], "constant cutoff", design.c_const)

    cur = CurrentTrialObservation(150, 150, (60, 45), (78, 63))
    out = decide(design, cur)
    print("S_hat", out.s_hat, "c_tilde", out.c_tilde, "reject", out.rejected)

    scen = [Scenario(r[:2], r[2:], replicates) for r in SIMULATION_TABLE_ROWS]
    print(f"{'scenario':>26}  {'surrogate':>22}  {'constant':>8}")
    for row in compare_power_preservation(design, design.c_const, scen, seed=1):
        sc, s, c = row["scenario"], row["surrogate"], row["constant"]
        label = f"{sc.control_rates} + {sc.effects}"
        print(
            f"{label:>26}  {100 * s.reject_h12_rate:5.1f} {100 * s.reject_h1_rate:5.1f} {100 * s.reject_h2_rate:5.1f}"
            f"  {100 * c.reject_h12_rate:8.1f}"
        )


if __name__ == "__main__":
    run()
