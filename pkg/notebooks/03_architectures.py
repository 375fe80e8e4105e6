# %% [markdown]
# # Network families
#
# HTCNN A1 and A2 take one grid per member postcode plus the sub-region
# aggregate grid. TCN, CNN and LSTM take a single grid. All emit 18 values.

# %%
import numpy as np

from htcnn import CnnSpec, HtcnnSpec, LstmSpec, TcnSpec, build_network

specs = {
    "HTCNN.A1": HtcnnSpec("A1", n_series=3),
    "HTCNN.A2": HtcnnSpec("A2", n_series=3),
    "TCN": TcnSpec(),
    "CNN": CnnSpec(),
    "LSTM": LstmSpec(),
}
rng = np.random.default_rng(0)
for name, spec in specs.items():
    net = build_network(spec, seed=0)
    if isinstance(spec, HtcnnSpec):
        xs = [rng.standard_normal((4, 18, 14)) for _ in range(3)] + [rng.standard_normal((4, 18, 7))]
    else:
        xs = [rng.standard_normal((4, 18, spec.f))]
    print(f"{name:9s} params {net.n_params:7d}  output {net.forward(xs).shape}")

# %% [markdown]
# ## Member order
# A1 concatenates the member grids along the feature axis before the first
# residual block. Reordering the members together with the matching input-channel
# blocks of the first convolution (and its 1x1 projection) leaves the output
# unchanged.

# %%
net = build_network(HtcnnSpec("A1", n_series=3, dropout=0.0), seed=0)
xs = [rng.standard_normal((2, 18, 14)) for _ in range(3)] + [rng.standard_normal((2, 18, 7))]
y = net.predict(xs)
perm = [2, 0, 1]
rows = np.concatenate([np.arange(p * 14, (p + 1) * 14) for p in perm])
first = net.stage1.layers[0].layers[0]
first.conv1.v.value[...] = first.conv1.v.value[:, rows, :]
if first.projection is not None:
    first.projection.w.value[...] = first.projection.w.value[:, rows, :]
print("max |diff|:", np.max(np.abs(net.predict([xs[p] for p in perm] + [xs[3]]) - y)))
