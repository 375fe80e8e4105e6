"""Residual blocks and TCN blocks built from dilated causal convolutions."""
from __future__ import annotations

import numpy as np

from .layers import ConvLayer, Dropout, Layer, ReLU, Sequential


def tcn_receptive_field(kernel_size: int, m: int) -> int:
    """Receptive field of a TCN block with residual blocks 0..m (dilations 2^i)."""
    return 1 + 2 * (kernel_size - 1) * (2 ** (m + 1) - 1)


def _child_rng(rng):
    return np.random.default_rng(int(rng.integers(2**63)))


class ResidualBlock(Layer):
    """conv -> ReLU -> dropout -> conv -> ReLU -> dropout, plus a skip path.

    Both convolutions share the block's dilation. The skip path is the
    identity when channel counts match, otherwise a learned 1x1 convolution.
    """

    def __init__(self, in_channels, out_channels, kernel_size, dilation, dropout=0.1,
                 rng=None, name="res"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dilation = dilation
        self.conv1 = ConvLayer(in_channels, out_channels, kernel_size, dilation, rng=rng, name=f"{name}.conv1")
        self.conv2 = ConvLayer(out_channels, out_channels, kernel_size, dilation, rng=rng, name=f"{name}.conv2")
        self.path = Sequential([
            self.conv1, ReLU(), Dropout(dropout, _child_rng(rng)),
            self.conv2, ReLU(), Dropout(dropout, _child_rng(rng)),
        ])
        self.projection = None
        if in_channels != out_channels:
            self.projection = ConvLayer(in_channels, out_channels, 1, 1, weight_norm=False,
                                        rng=rng, name=f"{name}.proj")

    def children(self):
        return [self.path] + ([self.projection] if self.projection else [])

    def params(self):
        ps = self.path.params()
        if self.projection is not None:
            ps += self.projection.params()
        return ps

    def forward(self, x, training=False):
        skip = x if self.projection is None else self.projection.forward(x, training)
        return self.path.forward(x, training) + skip

    def backward(self, grad):
        dx = self.path.backward(grad)
        if self.projection is None:
            return dx + grad
        return dx + self.projection.backward(grad)


class TcnBlock(Sequential):
    """Residual blocks 0..m with dilations 1, 2, 4, ..., 2^m."""

    def __init__(self, in_channels, filters, kernel_size=3, m=2, dropout=0.1, rng=None, name="tcn"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kernel_size = kernel_size
        self.m = m
        blocks = []
        c = in_channels
        for i in range(m + 1):
            blocks.append(ResidualBlock(c, filters, kernel_size, 2 ** i, dropout, rng, name=f"{name}.res{i}"))
            c = filters
        super().__init__(blocks)

    @property
    def receptive_field(self):
        return tcn_receptive_field(self.kernel_size, self.m)


def conv_stage(in_channels, filters, n_blocks=1, kernel_size=3, m=2, dropout=0.1, rng=None, name="stage"):
    """A convolution stage: ``n_blocks`` TCN blocks in sequence, length preserving."""
    rng = rng if rng is not None else np.random.default_rng(0)
    blocks = []
    c = in_channels
    for i in range(n_blocks):
        blocks.append(TcnBlock(c, filters, kernel_size, m, dropout, rng, name=f"{name}.tcn{i}"))
        c = filters
    return Sequential(blocks)
