"""
Privacy accounting for subsampled Gaussian noise
================================================

The accountant bounds the Renyi divergence of one noisy step at a grid of
orders, composes over all steps and converts to (epsilon, delta). Bisection
then finds the smallest noise multiplier meeting a target.
"""

import math

import numpy as np

from dpfair.privacy import (
    DEFAULT_ORDERS,
    calibrate_noise_multiplier,
    compute_epsilon,
    rdp_subsampled_gaussian,
    rdp_to_epsilon,
)

n_train, batch, epochs = 24148, 20, 20
q = batch / n_train
steps = epochs * math.ceil(n_train / batch)
print(f"q = {q:.6f}, T = {steps}")

# per-step divergence grows with the order
prof = rdp_subsampled_gaussian(q, 1.0)
for a, v in list(zip(prof.orders, prof.rdp_values))[::8]:
    print(f"  order {a:>6}: {v:.3e}")

eps, order = rdp_to_epsilon(prof, steps, 1e-5)
print(f"sigma=1.0 -> epsilon {eps:.4f} (best order {order})")

# more noise, less privacy loss
for sigma in np.geomspace(0.4, 8, 6):
    print(f"  sigma {sigma:5.2f} -> epsilon {compute_epsilon(q, sigma, steps, 1e-5):9.4f}")

# the grid used by the experiments
print("\n noise multiplier per (epsilon, delta)")
for eps in (0.1, 1.0, 10.0, 100.0):
    row = [calibrate_noise_multiplier(eps, d, q, steps)[0] for d in (1e-2, 1e-3, 1e-4, 1e-5)]
    print(f"  eps {eps:>5}: " + "  ".join(f"{s:7.4f}" for s in row))
print(len(DEFAULT_ORDERS), "orders from", DEFAULT_ORDERS[0], "to", DEFAULT_ORDERS[-1])
