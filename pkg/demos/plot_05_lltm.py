"""
Item features as a prior for new difficulties
=============================================

Fit a linear logistic test model to calibrated difficulties, predict a
new item's difficulty from its features, and use the prediction as the
prior in on-line calibration.
"""

import numpy as np

from bnassess.irt import OnlineConfig, calibrate_rasch_online, lltm_fit, lltm_predict, simulate_rasch

rng = np.random.default_rng(3)

# 60 calibrated items: intercept plus three binary features
Y = np.column_stack([np.ones(60), rng.integers(0, 2, (60, 3))])
eta_true = np.array([-0.5, 0.9, 0.4, -1.2])
betas = Y @ eta_true + rng.normal(0, 0.5, 60)
fit = lltm_fit(betas, Y)
print("eta:", np.round(fit.eta, 3), "se:", np.round(fit.standard_errors, 3), "sigma2:", round(fit.sigma2, 3))

# a new item with features (1, 1, 0, 1)
y_new = np.array([1.0, 1.0, 0.0, 1.0])
mean, var = lltm_predict(y_new, fit)
beta_new = float(y_new @ eta_true)
print(f"predicted difficulty {mean:.2f} (var {var:.2f}); true {beta_new:.2f}")

# 80 examinees answer 20 old items and the new one
theta = rng.normal(size=80)
old_b = betas[:20]
x_old = simulate_rasch(theta, old_b, rng)
x_new = simulate_rasch(theta, [beta_new], rng)
cfg = OnlineConfig(iterations=2000, burn_in=500, seed=4)
diffuse = calibrate_rasch_online(x_old, old_b, x_new, 0.0, 4.0, cfg)[0]
informed = calibrate_rasch_online(x_old, old_b, x_new, mean, var, cfg)[0]
print(f"diffuse prior : {diffuse.mean:.2f} +- {diffuse.sd:.2f}")
print(f"feature prior : {informed.mean:.2f} +- {informed.sd:.2f}")
