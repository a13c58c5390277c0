"""
Calibrating new tasks on line
=============================

Calibrate 12 tasks on 225 examinees, then bring in three new tasks with
100 fresh examinees.  The full mode updates everything under priors
moment-matched to the startup posteriors; the empirical-Bayes mode fixes
the old parameters at their posterior means.
"""

import numpy as np

from bnassess import (
    GibbsConfig,
    builtin_fraction_assets,
    calibrate_new_eb,
    calibrate_new_full,
    generate_synthetic,
    run_gibbs,
    sample_truth,
)

model = builtin_fraction_assets()
new = ("item5", "item10", "item14")
old = [t for t in model.task_ids if t not in new]

lam, pi = sample_truth(model, rng=np.random.default_rng(11))
responses, _ = generate_synthetic(model, lam, pi, 325, seed=12)
startup_data = responses.select(np.arange(225), old)
online_data = responses.select(np.arange(225, 325))

config = GibbsConfig(chains=3, burn_in=500, iterations=1500, seed=13)
startup = run_gibbs(startup_data, model.subset(old), config=config)

full = calibrate_new_full(startup, online_data, model, config)
lam_hat, pi_hat = startup.posterior_means(model.graph)
eb = calibrate_new_eb(lam_hat, pi_hat, online_data, model, config)

# new-task summaries side by side; EB n-hat tends to be a little larger
print(f"{'parameter':<22}{'truth':>7}{'full':>8}{'eb':>8}{'n full':>8}{'n eb':>8}")
for t in new:
    for k, name in enumerate((f"pi[{t}]|FalsePos", f"pi[{t}]|TruePos")):
        f, e = full.summaries[name], eb.summaries[name]
        print(f"{name:<22}{pi[t][k]:>7.3f}{f.mean:>8.3f}{e.mean:>8.3f}{f.n_hat:>8.1f}{e.n_hat:>8.1f}")
