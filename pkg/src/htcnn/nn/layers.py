"""Layers with hand-written forward and backward passes.

Arrays are float64 and batched: sequences are (batch, time, channels),
vectors are (batch, features). ``forward`` caches what ``backward`` needs;
``backward`` accumulates parameter gradients and returns the input gradient.
"""
from __future__ import annotations

import warnings

import numpy as np

from ..errors import StructuralError, UsageError

NORM_FLOOR = 1e-12


class Parameter:
    __slots__ = ("name", "value", "grad")

    def __init__(self, name, value):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Layer:
    """Base class. Subclasses override ``forward`` and ``backward``."""

    def params(self) -> list[Parameter]:
        return []

    def children(self) -> list["Layer"]:
        return []

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def zero_grad(self):
        for p in self.params():
            p.grad[...] = 0.0


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# --- convolution ------------------------------------------------------------


def weight_norm_forward(v, g):
    """Effective kernel g * v / ||v|| with the norm taken per output filter.

    ``v`` is (k, c_in, c_out) and ``g`` is (c_out,). Returns the kernel and
    the (floored) per-filter norms.
    """
    norms = np.sqrt(np.sum(v * v, axis=(0, 1)))
    if np.any(norms < NORM_FLOOR):
        warnings.warn("weight-norm direction with zero norm; floored", RuntimeWarning, stacklevel=2)
        norms = np.maximum(norms, NORM_FLOOR)
    return v * (g / norms), norms


def weight_norm_backward(dw, v, g, norms):
    """Gradients with respect to (v, g) given the gradient of the kernel."""
    v_hat = v / norms
    dg = np.sum(dw * v_hat, axis=(0, 1))
    dv = (g / norms) * (dw - v_hat * dg)
    return dv, dg


def _pad_left(x, pad):
    if not pad:
        return x
    xp = np.zeros((x.shape[0], x.shape[1] + pad, x.shape[2]))
    xp[:, pad:] = x
    return xp


def causal_conv1d_forward(x, w, b, dilation):
    """Dilated causal convolution with left zero padding.

    y[:, t, o] = b[o] + sum_j sum_c w[j, c, o] * x[:, t - (k-1-j)*dilation, c]
    Output length equals input length.
    """
    k, c_in, _ = w.shape
    if x.ndim != 3 or x.shape[2] != c_in:
        raise StructuralError(f"conv expects (batch, time, {c_in}) input, got {x.shape}")
    T = x.shape[1]
    xp = _pad_left(x, (k - 1) * dilation)
    y = xp[:, 0:T, :] @ w[0]
    for j in range(1, k):
        y += xp[:, j * dilation:j * dilation + T, :] @ w[j]
    y += b
    return y


def causal_conv1d_backward(grad, x, w, dilation):
    """Adjoint of ``causal_conv1d_forward``: returns (dx, dw, db)."""
    if x is None:
        raise UsageError("backward called before forward")
    k = w.shape[0]
    B, T, c_in = x.shape
    pad = (k - 1) * dilation
    xp = _pad_left(x, pad)
    dxp = np.zeros((B, T + pad, c_in))
    g2 = grad.reshape(-1, grad.shape[2])
    dw = np.empty_like(w)
    for j in range(k):
        sl = slice(j * dilation, j * dilation + T)
        dw[j] = xp[:, sl, :].reshape(-1, c_in).T @ g2
        dxp[:, sl, :] += grad @ w[j].T
    db = g2.sum(axis=0)
    return dxp[:, pad:, :], dw, db


class ConvLayer(Layer):
    """Causal dilated 1-D convolution, optionally weight-normalised.

    With weight norm the trainable tensors are the direction ``v``
    (k, c_in, c_out), the per-filter magnitude ``g`` and the bias; otherwise a
    plain kernel ``w`` and the bias.
    """

    def __init__(self, in_channels, out_channels, kernel_size, dilation=1, *,
                 weight_norm=True, rng=None, name="conv"):
        if min(in_channels, out_channels, kernel_size, dilation) < 1:
            raise StructuralError("conv dimensions must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kernel_size = kernel_size
        self.dilation = dilation
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.weight_norm = weight_norm
        shape = (kernel_size, in_channels, out_channels)
        v = glorot_uniform(rng, shape, kernel_size * in_channels, kernel_size * out_channels)
        if weight_norm:
            self.v = Parameter(f"{name}.v", v)
            self.g = Parameter(f"{name}.g", np.sqrt(np.sum(v * v, axis=(0, 1))))
        else:
            self.w = Parameter(f"{name}.w", v)
        self.b = Parameter(f"{name}.b", np.zeros(out_channels))
        self._x = None
        self._norms = None

    def params(self):
        if self.weight_norm:
            return [self.v, self.g, self.b]
        return [self.w, self.b]

    @property
    def receptive_field(self):
        return (self.kernel_size - 1) * self.dilation + 1

    def effective_weight(self):
        if self.weight_norm:
            w, self._norms = weight_norm_forward(self.v.value, self.g.value)
            return w
        return self.w.value

    def forward(self, x, training=False):
        self._x = x
        self._w = self.effective_weight()
        return causal_conv1d_forward(x, self._w, self.b.value, self.dilation)

    def backward(self, grad):
        dx, dw, db = causal_conv1d_backward(grad, self._x, self._w, self.dilation)
        self.b.grad += db
        if self.weight_norm:
            dv, dg = weight_norm_backward(dw, self.v.value, self.g.value, self._norms)
            self.v.grad += dv
            self.g.grad += dg
        else:
            self.w.grad += dw
        return dx


# --- elementwise and shape layers -------------------------------------------


class ReLU(Layer):
    def forward(self, x, training=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


def dropout_forward(x, rate, rng):
    """Inverted dropout: survivors are scaled by 1/(1-rate). Returns (y, mask)."""
    if not 0.0 <= rate < 1.0:
        raise StructuralError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


class Dropout(Layer):
    """Active only when ``training`` is true; identity at inference."""

    def __init__(self, rate=0.1, rng=None):
        if not 0.0 <= rate < 1.0:
            raise StructuralError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._mask = None

    def forward(self, x, training=False):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        y, self._mask = dropout_forward(x, self.rate, self.rng)
        return y

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


class Flatten(Layer):
    """(batch, t, F) -> (batch, t*F), time-major."""

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


def concat_features(parts):
    """Concatenate along the feature (last) axis; all other dims must agree."""
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead:
            raise StructuralError(
                f"cannot concatenate {p.shape} with {parts[0].shape}: time dimensions differ"
            )
    return np.concatenate(parts, axis=-1)


class Concat(Layer):
    def forward(self, parts, training=False):
        self._widths = [p.shape[-1] for p in parts]
        return concat_features(parts)

    def backward(self, grad):
        cuts = np.cumsum(self._widths)[:-1]
        return np.split(grad, cuts, axis=-1)


class Dense(Layer):
    """Fully connected layer with optional ReLU activation."""

    def __init__(self, n_in, n_out, activation="linear", rng=None, name="dense"):
        if activation not in ("linear", "relu"):
            raise StructuralError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out = n_in, n_out
        self.activation = activation
        self.w = Parameter(f"{name}.w", glorot_uniform(rng, (n_in, n_out), n_in, n_out))
        self.b = Parameter(f"{name}.b", np.zeros(n_out))

    def params(self):
        return [self.w, self.b]

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise StructuralError(f"dense expects (batch, {self.n_in}), got {x.shape}")
        self._x = x
        z = x @ self.w.value + self.b.value
        if self.activation == "relu":
            self._mask = z > 0
            return np.where(self._mask, z, 0.0)
        return z

    def backward(self, grad):
        if self.activation == "relu":
            grad = np.where(self._mask, grad, 0.0)
        self.w.grad += self._x.T @ grad
        self.b.grad += grad.sum(axis=0)
        return grad @ self.w.value.T


class MaxPool1d(Layer):
    """Non-overlapping max pooling over time; trailing remainder is dropped."""

    def __init__(self, size=2):
        self.size = size

    def output_length(self, T):
        return T // self.size

    def forward(self, x, training=False):
        B, T, C = x.shape
        n = T // self.size
        if n < 1:
            raise StructuralError(f"pool size {self.size} too large for length {T}")
        windows = x[:, :n * self.size, :].reshape(B, n, self.size, C)
        self._arg = windows.argmax(axis=2)
        self._shape = x.shape
        return windows.max(axis=2)

    def backward(self, grad):
        B, T, C = self._shape
        n = grad.shape[1]
        dwin = np.zeros((B, n, self.size, C))
        np.put_along_axis(dwin, self._arg[:, :, None, :], grad[:, :, None, :], axis=2)
        dx = np.zeros(self._shape)
        dx[:, :n * self.size, :] = dwin.reshape(B, n * self.size, C)
        return dx


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def children(self):
        return self.layers

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad
