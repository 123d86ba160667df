#
# Amortizing the posterior: label simulated trials by MCMC and fit networks.
#
# A small training set (600 examples) keeps this quick; the design used in
# the acceptance suite labels 2,000. The promise-probability network F_S takes
# the four observed response fractions, the posterior-mean network F_P only
# the two control fractions.
#

import time

import numpy as np

from dnnborrow.data import SIMULATION_SPACES, SIMULATION_HISTORY
from dnnborrow.mcmc import McmcConfig
from dnnborrow.mlp import MlpSpec, TrainConfig
from dnnborrow.surrogate import draw_scenarios, fit_posterior_surrogates, generate_training_set, training_patterns
from dnnborrow.types import EndpointConfig, HierPriorConfig


def run(B=600, seed=3):
    rates, patterns = draw_scenarios(training_patterns(SIMULATION_SPACES), B, seed)
    t0 = time.time()
    ts = generate_training_set(
        SIMULATION_HISTORY, 150, 150, rates, HierPriorConfig.default(2), McmcConfig(), EndpointConfig(), seed, patterns
    )
    print(f"labeled {len(ts)} examples in {time.time() - t0:.0f}s, excluded {len(ts.excluded)}")

    cands_s = [MlpSpec(4, 2, (60, 60)), MlpSpec(4, 2, (50, 50, 50))]
    cands_p = [MlpSpec(2, 2, (20, 20)), MlpSpec(2, 2, (60, 60))]
    fs, fp = fit_posterior_surrogates(
        ts, cands_s, cands_p, TrainConfig(epochs=50, seed=seed), TrainConfig(epochs=500, seed=seed)
    )
    print("F_S", fs.spec.hidden_widths, f"train MSE {fs.train_mse:.2e}  holdout MSE {fs.validation_mse:.2e}")
    print("F_P", fp.spec.hidden_widths, f"train MSE {fp.train_mse:.2e}  holdout MSE {fp.validation_mse:.2e}")

    x = np.array([[0.4, 0.3, 0.4, 0.3], [0.4, 0.3, 0.5, 0.4], [0.3, 0.2, 0.45, 0.35]])
    for row, s in zip(x, fs.model(x)):
        print("fractions", row, "-> S_hat", s.round(4))


if __name__ == "__main__":
    run()
