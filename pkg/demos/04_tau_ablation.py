# %% [markdown]
# # How fast should the target network move?
#
# `tau` is the step size of the moving average that drags the target network
# towards the main network.  With `tau=1` the targets are recomputed from the
# current model at every batch, and seed-to-seed spread of the hazard
# estimates goes up.  We measure that spread with
# `delta = std / (mean * (1 - mean))` over all in-window hazards of a fixed
# test set.

# %%
import numpy as np

from deeptcsr.experiments import ablate_tau, resolve_config

cfg = resolve_config(overrides=[
    "model.arch=feedforward", "gen.dim=20", "gen.horizon=30", "gen.censoring=0.2",
    "gen.test_n=500", "sweep.sizes=50", "sweep.seeds=0,1,2,3,4",
    "sweep.taus=0.01,0.1,1.0", "train.epochs=60",
])
results = ablate_tau(cfg)

# %%
for tau, r in results.items():
    q = np.quantile(r["delta"], [0.25, 0.5, 0.75])
    print(f"tau={tau:<5}  mean delta {r['mean_delta']:.3f}  quartiles {np.round(q, 3)}  "
          f"CI {np.mean(r['ci']):.4f}  IBS {np.mean(r['ibs']):.4f}")
