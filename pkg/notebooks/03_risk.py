"""
How much risk is left?
======================

The remaining risk at a checkpoint is the conditional second moment of the
future cost.  For a constant benefit on a single-state cohort it is pure
binomial mortality risk; with a call benefit and a hidden hazard, financial
and systematic mortality risk add up.
"""

# %%
import math

import numpy as np

from lrmhedge import ClaimSpec, HazardModel, MarketModel, Scenario
from lrmhedge.hedging import Checkpoint, risk_process_estimate

market = MarketModel(100.0, 0.05, 0.2, 5.0)

# %%
lam, xi = 0.1, 3.0
one = HazardModel([[0.0]], [0.0], [[lam]], 5.0, [1.0], l_a=10)
sc = Scenario(one, market, ClaimSpec("pure_endowment", "constant", amount=xi), grid_steps=500)
p = math.exp(-lam * 5.0)
[est] = risk_process_estimate(sc, [Checkpoint(0.0, 100.0, 0, np.array([1.0]))], 5000, seed=1)
print(f"R_0 = {est.value:.3f} +/- {est.stderr:.3f}   binomial: {10 * p * (1 - p) * xi**2:.3f}")

# %% [markdown]
# Hidden hazard, call benefit: risk at a few checkpoints.  The filter at
# each checkpoint is a modelling input here.  Most of the risk is the
# unhedgeable mortality part scaled by the option value, so it falls as the
# horizon approaches and vanishes at T.

# %%
hidden = HazardModel([[-1.0, 1.0], [2.0, -2.0]], [0.0], [[0.02, 0.2]], 5.0, [0.5, 0.5], l_a=10)
sc = Scenario(hidden, market, ClaimSpec("pure_endowment", "call", 100.0), grid_steps=500)
checkpoints = [Checkpoint(0.0, 100.0, 0, np.array([0.5, 0.5])),
               Checkpoint(2.5, 110.0, 1, np.array([0.8, 0.2])),
               Checkpoint(2.5, 110.0, 1, np.array([0.2, 0.8])),
               Checkpoint(5.0, 120.0, 2, np.array([0.5, 0.5]))]
for cp, est in zip(checkpoints, risk_process_estimate(sc, checkpoints, 2000, seed=2)):
    print(f"t={cp.time:3.1f}  pi={cp.pi}  R={est.value:9.3f} +/- {est.stderr:.3f}")
