"""Finite-difference verification of analytic parameter gradients."""
from __future__ import annotations

import numpy as np

from .optim import mse_loss


def _loss(network, inputs, target):
    return mse_loss(network.forward(inputs, training=False), target)[0]


def grad_check(network, inputs, target, eps=1e-5, n_params=200, seed=0, floor=1e-6) -> float:
    """Max relative error between backprop and central differences.

    Checks a random subsample of ``n_params`` scalar parameters (all of them
    when the network is smaller) under MSE loss with dropout disabled. The
    relative error of one entry is |a - n| / max(|a|, |n|, floor); the floor
    keeps near-zero gradients from dividing round-off noise.
    """
    if not 0 < eps <= 1e-3:
        raise ValueError("eps must be in (0, 1e-3]")
    inputs = [np.asarray(x, dtype=np.float64) for x in inputs]
    network.zero_grad()
    pred = network.forward(inputs, training=False)
    _, g = mse_loss(pred, target)
    network.backward(g)

    params = network.params()
    index = [(pi, j) for pi, p in enumerate(params) for j in range(p.size)]
    rng = np.random.default_rng(seed)
    if len(index) > n_params:
        pick = rng.choice(len(index), size=n_params, replace=False)
        index = [index[i] for i in sorted(pick)]

    worst = 0.0
    for pi, j in index:
        p = params[pi]
        flat = p.value.reshape(-1)
        analytic = p.grad.reshape(-1)[j]
        orig = flat[j]
        flat[j] = orig + eps
        up = _loss(network, inputs, target)
        flat[j] = orig - eps
        down = _loss(network, inputs, target)
        flat[j] = orig
        numeric = (up - down) / (2 * eps)
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, err)
    return worst


def input_grad_check(layer, x, eps=1e-5, floor=1e-6, seed=0) -> float:
    """Relative error of a single layer's input gradient under a random linear loss."""
    rng = np.random.default_rng(seed)
    y = layer.forward(x, training=False)
    w = rng.standard_normal(y.shape)
    layer.zero_grad()
    dx = layer.backward(w)
    worst = 0.0
    xf = x.reshape(-1)
    for j in range(xf.size):
        orig = xf[j]
        xf[j] = orig + eps
        up = np.sum(layer.forward(x, training=False) * w)
        xf[j] = orig - eps
        down = np.sum(layer.forward(x, training=False) * w)
        xf[j] = orig
        numeric = (up - down) / (2 * eps)
        a = dx.reshape(-1)[j]
        worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
    return worst
