# %% [markdown]
# # Metrics, significance and the experiment report

# %%
import numpy as np

from htcnn import GeneratorConfig, StrategyConfig, generate_region, mann_whitney_u, nrmse, run_experiment, skill_score
from htcnn.evaluation import error_reduction_pct

print(nrmse([2.0, 2.0], [1.0, 3.0]))
print(round(skill_score(0.172, 0.288), 2), round(error_reduction_pct(0.184, 0.172), 2))

# %% [markdown]
# Mann-Whitney U: exact for small samples, normal approximation otherwise.

# %%
rng = np.random.default_rng(0)
print(mann_whitney_u(rng.normal(0, 1, 6), rng.normal(1, 1, 6)))
print(mann_whitney_u(rng.normal(0, 1, 40), rng.normal(0.5, 1, 40)))

# %% [markdown]
# ## A small experiment
# Per-day errors are averaged within a seed, then mean and std across seeds.

# Training is cut short here to keep the run quick, so the neural rows are
# far from converged.

# %%
ds = generate_region(GeneratorConfig(seed=0, n_days=90))
res = run_experiment(
    ds,
    [StrategyConfig("Direct", "SN"), StrategyConfig("PostcodeAGG", "TCN", {"epochs": 20}),
     StrategyConfig("SubRegionAGG", "HTCNN.A1", {"epochs": 20})],
    seeds=[0, 1],
    test_days=15,
)
print(res.report.to_table())
