"""
Startup calibration by Gibbs sampling
=====================================

Simulate 325 examinees from known parameters, calibrate every population
slot and every task, and compare the posterior means with the truth.
"""

import numpy as np

from bnassess import GibbsConfig, builtin_fraction_assets, generate_synthetic, run_gibbs, sample_truth

model = builtin_fraction_assets()

# generating parameters drawn from the model's own priors
lam, pi = sample_truth(model, rng=np.random.default_rng(1))
responses, truth = generate_synthetic(model, lam, pi, 325, seed=2)
print("responses:", responses.shape, "proportion correct:", round(float(np.nanmean(responses.cells)), 3))

# shorter chains than the defaults keep the demo quick
run = run_gibbs(responses, model, config=GibbsConfig(chains=3, burn_in=500, iterations=1500, seed=3))
print("max R-hat:", round(run.max_rhat, 4))
print(run.report_text())

# posterior means against the generating values
lam_hat, pi_hat = run.posterior_means(model.graph)
err = np.array([np.subtract(pi_hat[t], pi[t]) for t in model.task_ids])
print("mean |pi error|:", round(float(np.abs(err).mean()), 3))
print("lambda1 true / estimated:", round(lam["lambda1"], 3), round(lam_hat["lambda1"], 3))
