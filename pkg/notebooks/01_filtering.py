"""
Filtering a hidden hazard from death counts
===========================================

A cohort of ten lives shares a mortality hazard that switches between a
low and a high level.  Only the deaths are observed.  We simulate one
history, filter the hidden state and compare against a brute-force
discrete Bayes filter.
"""

# %%
import numpy as np

from lrmhedge import HazardModel, discrete_oracle, run_filter, sample_chain_path, sample_lifetimes
from lrmhedge.filtering import total_variation

model = HazardModel(generator=[[-1.0, 1.0], [2.0, -2.0]], hazard_times=[0.0], hazard_values=[[0.02, 0.2]],
                    horizon=5.0, initial_dist=[0.5, 0.5], l_a=10)
print("stationary law of the hidden state:", model.stationary_distribution())

# %% [markdown]
# One scenario: the chain path, then lifetimes driven by it.

# %%
rng = np.random.default_rng(13)
chain = sample_chain_path(model, model.horizon, rng)
deaths = sample_lifetimes(model, chain, model.l_a, rng)
print("chain jump times:", np.round(chain.jump_times, 3))
print("chain states:    ", chain.states)
print("death times:     ", np.round(deaths.death_times, 3))

# %% [markdown]
# The filter moves continuously between deaths (survival is evidence for
# the low-hazard state) and jumps toward the high-hazard state at every
# death.

# %%
grid = np.linspace(0.0, model.horizon, 2001)
traj = run_filter(model, deaths, grid)
for t in (0.0, 1.0, 2.0, 3.0, 4.0, 5.0):
    s = traj.at(t)
    print(f"t={t:3.1f}  deaths={s.n_dead}  P(high hazard)={s.pi[1]:.4f}")

# %% [markdown]
# Cross-check with the discrete oracle on a fine lattice.  The gap shrinks
# linearly with the oracle step.

# %%
for step in (2.5e-3, 1.25e-3, 5e-4, 2.5e-4):
    oracle = discrete_oracle(model, deaths, step, record=grid)
    ref = oracle.pi[np.searchsorted(oracle.times, grid - 1e-12)]
    print(f"oracle step {step:.2e}: max TV = {total_variation(traj.pi_on(grid), ref).max():.2e}")
