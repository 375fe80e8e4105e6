"""Base class for multi-input networks trained by :func:`htcnn.nn.train.train`."""
from __future__ import annotations

import numpy as np

from .layers import Layer


class Network(Layer):
    """A model mapping a list of (batch, t, f_j) inputs to (batch, h) outputs.

    Subclasses set ``spec`` (a JSON-serialisable dict) and implement
    ``forward(inputs, training)`` / ``backward(grad)``.
    """

    spec: dict = {}

    def predict(self, inputs) -> np.ndarray:
        return self.forward([np.asarray(x, dtype=np.float64) for x in inputs], training=False)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.value.ravel() for p in self.params()])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} values, got {flat.size}")
        i = 0
        for p in self.params():
            p.value[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    def snapshot(self) -> list:
        return [p.value.copy() for p in self.params()]

    def restore(self, snap):
        for p, v in zip(self.params(), snap):
            p.value[...] = v
