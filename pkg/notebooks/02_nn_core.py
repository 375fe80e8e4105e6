# %% [markdown]
# # The numpy network core
#
# Layers carry their own forward and backward passes. Here: a dilated causal
# convolution by hand, a finite-difference gradient check, and the receptive
# field of a stack of residual blocks.

# %%
import numpy as np

from htcnn.nn import ConvLayer, Flatten, TcnBlock, causal_conv1d_forward, grad_check, tcn_receptive_field

# %% [markdown]
# A kernel of width 2 with dilation 2 reads x[t] and x[t-2]; positions before
# the start are zero padded so nothing leaks from the future.

# %%
x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1)
w = np.array([1.0, 1.0]).reshape(2, 1, 1)
print(causal_conv1d_forward(x, w, np.zeros(1), dilation=2)[0, :, 0])

# %% [markdown]
# ## Gradient check
# Backprop against central differences on a small weight-normalised conv.


# %%
class OneLayer:
    def __init__(self, layer):
        self.layer, self.flat = layer, Flatten()

    def params(self):
        return self.layer.params()

    def zero_grad(self):
        self.layer.zero_grad()

    def forward(self, xs, training=False):
        return self.flat.forward(self.layer.forward(xs[0], training))

    def backward(self, g):
        return self.layer.backward(self.flat.backward(g))


rng = np.random.default_rng(0)
net = OneLayer(ConvLayer(3, 4, kernel_size=3, dilation=2, rng=rng))
xs = [rng.standard_normal((2, 10, 3))]
target = rng.standard_normal((2, 40))
print("max relative error:", grad_check(net, xs, target))

# %% [markdown]
# ## Receptive field
# Perturb one input step at a time and see whether the last output moves.

# %%
for k, m in [(2, 1), (2, 2), (3, 2)]:
    blk = TcnBlock(1, 2, kernel_size=k, m=m, dropout=0.0, rng=np.random.default_rng(1))
    for p in blk.params():
        p.value[...] = np.abs(p.value) + 0.1  # keep every ReLU open
    T = 40
    x = np.ones((1, T, 1))
    base = blk.forward(x)[0, -1]
    seen = []
    for lag in range(T):
        x2 = x.copy()
        x2[0, T - 1 - lag] += 1.0
        seen.append(not np.array_equal(blk.forward(x2)[0, -1], base))
    print(f"k={k} m={m}: formula {tcn_receptive_field(k, m)}, probed {max(i for i, s in enumerate(seen) if s) + 1}")
