# %% [markdown]
# # Random-walk churn data
#
# Each synthetic subject follows a Gaussian random walk in feature space and
# churns at step `k` with probability `sigmoid(a @ x_k + b)`.  Walks that
# reach the horizon are censored.  The intercept `b` sets how many records are
# censored, so we calibrate it instead of picking it by hand.

# %%
import numpy as np

from deeptcsr import (RwConfig, calibrate_intercept, dataset_stats, default_coefficients,
                      generate_random_walk, kaplan_meier)

dim, horizon = 20, 11
a = default_coefficients(dim, seed=0)
b = calibrate_intercept(dim, horizon, a, target_censoring=0.2, seed=0)
print(f"calibrated intercept b = {b:.4f}")

# %%
ds = generate_random_walk(RwConfig(n=1000, dim=dim, horizon=horizon, a=a, b=b, seed=1))
stats = dataset_stats(ds)
print(stats)

# %% [markdown]
# Durations range from 2 to the horizon.  A censored record always runs the
# full horizon, and an uncensored one ends on the step where the event fired.

# %%
values, counts = np.unique(ds.durations, return_counts=True)
for t, c in zip(values, counts):
    print(f"t={t:2d}  {'#' * (c // 10)} {c}")

# %% [markdown]
# The population survival curve.  The event (or censoring) of a record with
# duration `t` happens at index `t - 1`.

# %%
km = kaplan_meier(ds.durations - 1, ds.censored)
print(np.round(km.on_grid(horizon), 3))
