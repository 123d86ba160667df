#
# Borrowing historical control information with the hierarchical logit model.
#
# Six completed studies observed control response rates near 0.4 / 0.3. We
# sample the posterior of the current control rates for a few current-trial
# outcomes and watch the posterior mean get pulled toward the historical data.
#

import numpy as np

from dnnborrow.data import SIMULATION_HISTORY
from dnnborrow.mcmc import McmcConfig, posterior_prob_S, sample_posterior
from dnnborrow.types import CurrentTrialObservation, EndpointConfig, HierPriorConfig


def run():
    prior = HierPriorConfig.default(2)
    cfg = McmcConfig(seed=1)
    print("historical pooled rates:", np.round(SIMULATION_HISTORY.pooled_rates(), 3))

    for r_control in [(45, 30), (60, 45), (75, 60)]:
        cur = CurrentTrialObservation(150, 150, r_control, (r_control[0] + 15, r_control[1] + 15))
        draws = sample_posterior(SIMULATION_HISTORY, cur, prior, EndpointConfig(), cfg)
        mean = draws.control_draws.mean(axis=0)
        s = posterior_prob_S(draws.control_draws, draws.treatment_draws, (0.0, 0.0))
        print(
            f"observed control {np.divide(r_control, 150).round(3)}  "
            f"posterior mean {mean.round(3)}  R-hat {draws.rhat.round(4)}  S {s.round(4)}"
        )


if __name__ == "__main__":
    run()
