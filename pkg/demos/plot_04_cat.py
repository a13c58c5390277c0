"""
Adaptive versus random item selection
=====================================

Simulate Rasch examinees taking a computerized adaptive test from a
200-item pool, with and without minimum-expected-variance selection.
"""

import numpy as np

from bnassess.irt import CatConfig, RaschItem, RaschResponder, normal_grid, run_cat

rng = np.random.default_rng(0)
pool = [RaschItem(f"i{k:03d}", b) for k, b in enumerate(rng.uniform(-3, 3, 200))]
prior = normal_grid()
config = CatConfig(stop_sd=0.35, max_items=200)

# paired sessions: both selectors face responders built from the same seed
thetas = rng.standard_normal(100)
seeds = np.random.SeedSequence(1).spawn(len(thetas))
lengths = {"adaptive": [], "random": []}
for theta, ss in zip(thetas, seeds):
    for selector in lengths:
        session = run_cat(RaschResponder(theta, np.random.default_rng(ss)), pool, prior, config, selector, rng)
        lengths[selector].append(session.n_items)

for selector, n in lengths.items():
    print(f"{selector:<9} mean items to reach sd 0.35: {np.mean(n):.1f}")

# one trace in detail
session = run_cat(RaschResponder(1.0, np.random.default_rng(5)), pool, prior, config)
for r in session.records[:8]:
    print(f"{r.item}  beta={r.beta:+.2f}  x={r.response}  mean={r.mean:+.3f}  sd={r.sd:.3f}")
