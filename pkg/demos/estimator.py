"""
Learning a sensitivity online
=============================

The recursive estimator only learns along directions the inputs actually
move in. Repeating one direction leaves the rest of the Jacobian at its
prior; rotating directions pins all of it down.
"""

# %%
import numpy as np

from peofo import estimator as est

rng = np.random.default_rng(0)
G = rng.normal(size=(3, 2))
model = est.NoiseModel(0.0, 0.0, 1e-6, 0.0, 0.0)


def learn(steps):
    state = est.SensitivityEstimate.initial(2, 3)
    for du in steps:
        state = est.update(state, model, du, G @ du)
    return np.linalg.norm(est.jacobian(state) - G)


# %% always the same direction: the error stalls
same = [np.array([1.0, 0.5]) * 0.01] * 20
print(f"one direction:  error {learn(same):.3e}")

# %% alternating directions: the error collapses
rich = [np.array([1.0, 0.5]) * 0.01 if k % 2 else np.array([-0.5, 1.0]) * 0.01 for k in range(20)]
print(f"two directions: error {learn(rich):.3e}")
