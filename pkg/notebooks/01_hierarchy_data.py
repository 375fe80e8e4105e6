# %% [markdown]
# # Regional hierarchy and feature grids
#
# A region is a set of postcode PV series. Postcodes are clustered on their
# coordinates into sub-regions; the regional and sub-regional series are plain
# sums of their members. Each day has 18 hourly slots
# from 05:00 to 22:00.

# %%
import numpy as np

from htcnn import GeneratorConfig, aggregate_series, build_feature_matrix, generate_region, kmeans
from htcnn.data import feature_columns, fit_dataset_scalers, make_samples, train_test_split

ds = generate_region(GeneratorConfig(seed=0))
print(ds.n_postcodes, "postcodes,", ds.n_clusters, "sub-regions,", ds.n_days, "days")

# %% [markdown]
# The aggregates are validated on construction. Recomputing them by hand:

# %%
total = aggregate_series(ds.postcode_series).values
print("regional max |diff|:", np.max(np.abs(total - ds.regional.values)))
for c in range(ds.n_clusters):
    sub = aggregate_series(ds.members(c)).values
    print(f"sub-region {c}: {len(ds.members(c))} members, max |diff| {np.max(np.abs(sub - ds.subregion_aggregates[c].values))}")

# %% [markdown]
# ## Clustering
# k-means++ seeding followed by Lloyd iterations; inertia drops as k grows.

# %%
for k in range(1, 7):
    res = kmeans(ds.postcode_coords, k, seed=0)
    print(k, round(res.inertia_history[-1], 4), res.n_iter, "iterations")

# %% [markdown]
# ## Feature grid for one postcode and one day
# Rows are the 18 slots. The first 7 columns are the same slot on the 7 previous
# days (oldest first), then the 7 weather features of the forecast day.

# %%
pc = ds.postcode_series[0]
fm = build_feature_matrix(pc, ds.weather_for(pc.id), day=20)
print(fm.values.shape)
print(feature_columns(7, True))
np.set_printoptions(precision=3, suppress=True, linewidth=140)
print(fm.values[:6])

# %% [markdown]
# ## Scaled training samples
# Scalers are fit on training days only. The first 7 days have no full lag
# window and are skipped.

# %%
train_view, test_view = train_test_split(ds, 36)
scalers = fit_dataset_scalers(ds, train_view.days)
samples = make_samples(ds, pc.id, [pc.id], days=range(7, train_view.days.stop), scalers=scalers)
print(len(samples.days), "training samples, input", samples.inputs[0].shape, "target", samples.targets.shape)
print("per-column mean of the inputs:", samples.inputs[0].mean(axis=(0, 1)).round(3))
