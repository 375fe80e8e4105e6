import time

import numpy as np
import pytest

from htcnn.data import SampleSet
from htcnn.errors import ConfigurationError, NumericalError, StructuralError, UsageError
from htcnn.nn import (
    AdamState, Concat, ConvLayer, Dense, Dropout, Flatten, MaxPool1d, Network, Parameter, ReLU,
    ResidualBlock, Sequential, TcnBlock, TrainConfig, adam_step, causal_conv1d_backward,
    causal_conv1d_forward, concat_features, dropout_forward, grad_check, input_grad_check,
    mse_loss, tcn_receptive_field, train, weight_norm_backward, weight_norm_forward,
)


class Probe(Network):
    """Single-input network around one layer; sequence outputs are flattened."""

    def __init__(self, layer):
        self.layer = layer
        self.flat = Flatten()

    def params(self):
        return self.layer.params()

    def forward(self, inputs, training=False):
        y = self.layer.forward(inputs[0], training)
        self._seq = y.ndim == 3
        return self.flat.forward(y) if self._seq else y

    def backward(self, grad):
        if self._seq:
            grad = self.flat.backward(grad)
        return [self.layer.backward(grad)]


def check(layer, x, rng):
    net = Probe(layer)
    y = net.forward([x])
    target = rng.standard_normal(y.shape)
    return grad_check(net, [x], target, n_params=400), input_grad_check(layer, x.copy())


# --- convolution ------------------------------------------------------------


def test_conv_hand_example():
    x = np.array([1.0, 2, 3, 4]).reshape(1, 4, 1)
    w = np.ones((2, 1, 1))
    y = causal_conv1d_forward(x, w, np.zeros(1), dilation=2)
    assert y.ravel().tolist() == [1.0, 2.0, 4.0, 6.0]


def test_conv_identity():
    x = np.random.default_rng(0).normal(size=(2, 5, 1))
    y = causal_conv1d_forward(x, np.ones((1, 1, 1)), np.zeros(1), 1)
    assert np.array_equal(y, x)


def test_conv_dilation_one_standard():
    x = np.array([1.0, 2, 3, 4]).reshape(1, 4, 1)
    w = np.array([2.0, 3.0]).reshape(2, 1, 1)
    y = causal_conv1d_forward(x, w, np.zeros(1), 1).ravel()
    # y_t = 2 x_{t-1} + 3 x_t with x_{-1} = 0
    assert y.tolist() == [3.0, 8.0, 13.0, 18.0]


def test_conv_shape_mismatch():
    with pytest.raises(StructuralError):
        causal_conv1d_forward(np.zeros((1, 4, 2)), np.zeros((2, 3, 1)), np.zeros(1), 1)


def test_conv_backward_without_forward():
    with pytest.raises(UsageError):
        causal_conv1d_backward(np.zeros((1, 4, 1)), None, np.zeros((2, 1, 1)), 1)


def test_conv_zero_upstream():
    rng = np.random.default_rng(0)
    x, w = rng.normal(size=(2, 6, 3)), rng.normal(size=(3, 3, 2))
    dx, dw, db = causal_conv1d_backward(np.zeros((2, 6, 2)), x, w, 2)
    assert not dx.any() and not dw.any() and not db.any()


def test_conv_bias_grad_column_sums():
    rng = np.random.default_rng(0)
    x, w, g = rng.normal(size=(2, 6, 3)), rng.normal(size=(3, 3, 2)), rng.normal(size=(2, 6, 2))
    _, _, db = causal_conv1d_backward(g, x, w, 1)
    np.testing.assert_allclose(db, g.sum(axis=(0, 1)), rtol=1e-14)


@pytest.mark.parametrize("dilation", [1, 2, 4])
@pytest.mark.parametrize("weight_norm", [True, False])
def test_conv_finite_differences(rng, dilation, weight_norm):
    layer = ConvLayer(3, 2, 3, dilation, weight_norm=weight_norm, rng=rng)
    layer.b.value[:] = rng.normal(size=2)
    x = rng.standard_normal((1, 6, 3))
    p_err, x_err = check(layer, x, rng)
    assert p_err < 1e-4 and x_err < 1e-4


# --- weight norm ------------------------------------------------------------


def test_weight_norm_identity_when_g_equals_norm():
    v = np.zeros((2, 1, 1))
    v[0, 0, 0], v[1, 0, 0] = 2.0, 0.0
    w, _ = weight_norm_forward(v, np.array([2.0]))
    assert np.array_equal(w, v)


def test_weight_norm_scale_invariance(rng):
    v, g = rng.normal(size=(3, 4, 5)), rng.uniform(0.5, 2, size=5)
    w1, _ = weight_norm_forward(v, g)
    for c in (0.01, 3.0, 1e4):
        np.testing.assert_allclose(weight_norm_forward(c * v, g)[0], w1, rtol=1e-12)


def test_weight_norm_layer_scale_invariance(rng):
    layer = ConvLayer(2, 3, 3, 2, rng=rng)
    x = rng.normal(size=(2, 7, 2))
    y = layer.forward(x)
    layer.v.value *= 7.5
    np.testing.assert_allclose(layer.forward(x), y, rtol=1e-12)


def test_weight_norm_finite_differences(rng):
    v, g = rng.normal(size=(3, 2, 4)), rng.uniform(0.5, 2, size=4)
    up = rng.normal(size=v.shape)
    w, norms = weight_norm_forward(v, g)
    dv, dg = weight_norm_backward(up, v, g, norms)
    eps = 1e-6

    def f(v_, g_):
        return np.sum(weight_norm_forward(v_, g_)[0] * up)

    num_v = np.zeros_like(v)
    for idx in np.ndindex(v.shape):
        e = np.zeros_like(v)
        e[idx] = eps
        num_v[idx] = (f(v + e, g) - f(v - e, g)) / (2 * eps)
    num_g = np.array([(f(v, g + eps * np.eye(4)[j]) - f(v, g - eps * np.eye(4)[j])) / (2 * eps) for j in range(4)])
    assert np.max(np.abs(num_v - dv) / np.maximum(np.abs(dv), 1e-6)) < 1e-4
    assert np.max(np.abs(num_g - dg) / np.maximum(np.abs(dg), 1e-6)) < 1e-4


def test_weight_norm_zero_norm_warns():
    with pytest.warns(RuntimeWarning, match="zero norm"):
        w, _ = weight_norm_forward(np.zeros((2, 1, 1)), np.ones(1))
    assert np.all(np.isfinite(w))


# --- elementwise / shape layers ---------------------------------------------


def test_relu_grad(rng):
    x = rng.normal(size=(2, 5, 3))
    assert input_grad_check(ReLU(), x) < 1e-6


def test_dropout_rate_zero_identity(rng):
    x = rng.normal(size=(3, 4))
    y, mask = dropout_forward(x, 0.0, rng)
    assert y is x and mask is None


def test_dropout_inverted_scaling():
    x = np.ones((200, 50))
    y, _ = dropout_forward(x, 0.2, np.random.default_rng(0))
    kept = y[y != 0]
    np.testing.assert_allclose(kept, 1.0 / 0.8)
    assert abs(y.mean() - 1.0) < 0.02


def test_dropout_inactive_at_inference(rng):
    x = rng.normal(size=(3, 4))
    assert np.array_equal(Dropout(0.5, rng).forward(x, training=False), x)


def test_dropout_deterministic_per_seed():
    x = np.ones((4, 6))
    a = Dropout(0.5, np.random.default_rng(3)).forward(x, training=True)
    b = Dropout(0.5, np.random.default_rng(3)).forward(x, training=True)
    assert np.array_equal(a, b)


def test_dropout_rejects_bad_rate():
    with pytest.raises(StructuralError):
        Dropout(1.0)


def test_dropout_backward_uses_mask():
    d = Dropout(0.5, np.random.default_rng(1))
    y = d.forward(np.ones((3, 8)), training=True)
    assert np.array_equal(d.backward(np.ones((3, 8))), y)


def test_flatten_shape():
    f = Flatten()
    x = np.arange(2 * 18 * 3.0).reshape(2, 18, 3)
    assert f.forward(x).shape == (2, 54)
    assert np.array_equal(f.backward(f.forward(x)), x)


def test_concat_three_postcodes():
    parts = [np.zeros((1, 18, 14))] * 3
    assert concat_features(parts).shape == (1, 18, 42)


def test_concat_mismatch():
    with pytest.raises(StructuralError, match="time"):
        concat_features([np.zeros((1, 18, 2)), np.zeros((1, 17, 2))])


def test_concat_backward_splits(rng):
    c = Concat()
    parts = [rng.normal(size=(2, 4, k)) for k in (1, 3, 2)]
    y = c.forward(parts)
    back = c.backward(y)
    assert all(np.array_equal(a, b) for a, b in zip(back, parts))


@pytest.mark.parametrize("activation", ["linear", "relu"])
def test_dense_finite_differences(rng, activation):
    layer = Dense(5, 4, activation, rng)
    layer.b.value[:] = rng.normal(size=4) * 0.1
    p_err, x_err = check(layer, rng.standard_normal((3, 5)), rng)
    assert p_err < 1e-6 and x_err < 1e-6


def test_dense_wrong_width():
    with pytest.raises(StructuralError):
        Dense(3, 2).forward(np.zeros((1, 4)))


def test_maxpool_length_and_grad(rng):
    pool = MaxPool1d(2)
    x = rng.normal(size=(2, 18, 3))
    assert pool.forward(x).shape == (2, 9, 3)
    assert input_grad_check(pool, x) < 1e-6


def test_maxpool_odd_length_drops_tail(rng):
    x = rng.normal(size=(1, 5, 1))
    assert MaxPool1d(2).forward(x).shape == (1, 2, 1)


# --- residual / TCN ---------------------------------------------------------


def test_residual_zero_weights_is_skip(rng):
    block = ResidualBlock(3, 3, 3, 1, dropout=0.0, rng=rng)
    for conv in (block.conv1, block.conv2):
        conv.g.value[:] = 0.0
    x = rng.normal(size=(2, 6, 3))
    assert np.array_equal(block.forward(x), x)


def test_residual_projection_when_channels_differ(rng):
    block = ResidualBlock(3, 5, 2, 2, rng=rng)
    assert block.projection is not None
    assert block.forward(rng.normal(size=(1, 6, 3))).shape == (1, 6, 5)


@pytest.mark.parametrize("c_in", [3, 4])
def test_residual_finite_differences(rng, c_in):
    block = ResidualBlock(c_in, 4, 2, 2, dropout=0.1, rng=rng)
    for conv in (block.conv1, block.conv2):
        conv.b.value[:] = 0.1 * rng.normal(size=4)
    p_err, x_err = check(block, rng.standard_normal((2, 6, c_in)), rng)
    assert p_err < 1e-4 and x_err < 1e-4


def test_tcn_block_preserves_length(rng):
    blk = TcnBlock(5, 4, kernel_size=3, m=2, dropout=0.0, rng=rng)
    assert blk.forward(rng.normal(size=(2, 18, 5))).shape == (2, 18, 4)


def test_tcn_single_block_equals_residual():
    a = TcnBlock(3, 3, kernel_size=2, m=0, dropout=0.0, rng=np.random.default_rng(5))
    b = ResidualBlock(3, 3, 2, 1, dropout=0.0, rng=np.random.default_rng(5))
    x = np.random.default_rng(0).normal(size=(1, 7, 3))
    # same rng stream -> same initial weights
    assert np.array_equal(a.forward(x), b.forward(x))


def _positive(layer, rng):
    for p in layer.params():
        p.value[...] = rng.uniform(0.1, 1.0, size=p.shape)


def _influence(blk, T, lags):
    """Which earlier input steps affect the output at the last step."""
    x = np.ones((1, T, 2))
    base = blk.forward(x)[0, -1]
    out = {}
    for lag in lags:
        x2 = x.copy()
        x2[0, T - 1 - lag] += 1.0
        out[lag] = not np.array_equal(blk.forward(x2)[0, -1], base)
    return out


@pytest.mark.parametrize("k,m,expected", [(2, 1, 7), (2, 2, 15), (3, 2, 29)])
def test_receptive_field_probe(k, m, expected):
    assert tcn_receptive_field(k, m) == expected
    rng = np.random.default_rng(k * 10 + m)
    blk = TcnBlock(2, 3, kernel_size=k, m=m, dropout=0.0, rng=rng)
    _positive(blk, rng)
    T = expected + 6
    infl = _influence(blk, T, [expected - 1, expected])
    assert infl[expected - 1] is True
    assert infl[expected] is False


@pytest.mark.parametrize("factory", [
    lambda r: ConvLayer(2, 3, 3, 2, rng=r),
    lambda r: ResidualBlock(2, 3, 2, 4, dropout=0.0, rng=r),
    lambda r: TcnBlock(2, 3, kernel_size=3, m=2, dropout=0.0, rng=r),
])
def test_causality(factory, rng):
    layer = factory(rng)
    T = 12
    x = rng.normal(size=(1, T, 2))
    y = layer.forward(x)
    for t in range(T - 1):
        x2 = x.copy()
        x2[0, t + 1:] += rng.normal(size=(T - t - 1, 2))
        assert np.array_equal(layer.forward(x2)[0, :t + 1], y[0, :t + 1])


# --- loss / optimiser -------------------------------------------------------


def test_mse_cases():
    assert mse_loss([1.0, 2.0], [1.0, 2.0])[0] == 0.0
    loss, grad = mse_loss([1.0, 3.0], [2.0, 2.0])
    assert loss == 1.0
    assert grad.tolist() == [-1.0, 1.0]


def test_mse_order_invariant(rng):
    p, t = rng.normal(size=10), rng.normal(size=10)
    perm = rng.permutation(10)
    assert mse_loss(p, t)[0] == pytest.approx(mse_loss(p[perm], t[perm])[0], rel=1e-15)


def test_mse_shape_mismatch():
    with pytest.raises(StructuralError):
        mse_loss(np.zeros(3), np.zeros(4))


def test_adam_zero_grad_unchanged():
    p = Parameter("p", np.array([1.0, -2.0]))
    st = AdamState([p], learning_rate=0.1)
    for _ in range(5):
        adam_step(st)
    assert p.value.tolist() == [1.0, -2.0]


@pytest.mark.parametrize("g", [1e-3, 0.5, -7.0, 1e4])
def test_adam_first_step_is_lr(g):
    p = Parameter("p", np.array([0.0]))
    p.grad[:] = g
    adam_step(AdamState([p], learning_rate=0.01))
    # m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps)
    assert p.value[0] == pytest.approx(-0.01 * np.sign(g) * abs(g) / (abs(g) + 1e-8), rel=1e-12)
    assert abs(abs(p.value[0]) - 0.01) < 1e-7


def test_adam_deterministic():
    def run():
        p = Parameter("p", np.array([1.0, 2.0]))
        st = AdamState([p])
        for i in range(10):
            p.grad[:] = [np.sin(i), np.cos(i)]
            adam_step(st)
        return p.value.copy()
    assert np.array_equal(run(), run())


# --- training ---------------------------------------------------------------


class LinearNet(Network):
    def __init__(self, f, h, seed=0):
        self.flat = Flatten()
        self.fc = Dense(f, h, "linear", np.random.default_rng(seed))
        self.spec = {"kind": "linear"}

    def params(self):
        return self.fc.params()

    def forward(self, inputs, training=False):
        return self.fc.forward(self.flat.forward(inputs[0]), training)

    def backward(self, grad):
        return [self.flat.backward(self.fc.backward(grad))]


def _toy(n=40, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3, 2))
    w = rng.normal(size=(6, 2))
    return SampleSet([x], x.reshape(n, -1) @ w, np.arange(n))


def test_linear_grad_check_exact():
    s = _toy()
    net = LinearNet(6, 2)
    assert grad_check(net, [s.inputs[0][:5]], s.targets[:5], eps=1e-4) < 1e-8


def test_train_patience_bound():
    s = _toy()
    s = SampleSet(s.inputs, s.targets + np.random.default_rng(1).normal(size=s.targets.shape), s.days)
    res = train(LinearNet(6, 2), s, TrainConfig(epochs=2000, learning_rate=0.05, patience=5, batch_size=8))
    assert res.stopped_early
    assert res.epochs_run - 1 - res.best_epoch <= 5
    assert res.best_loss == min(res.val_loss)


def test_train_restores_best():
    s = _toy()
    net = LinearNet(6, 2)
    res = train(net, s, TrainConfig(epochs=30, learning_rate=0.05, patience=3))
    from htcnn.nn import evaluate_loss
    val = s.subset(np.arange(36, 40))
    assert evaluate_loss(net, val) == pytest.approx(res.best_loss, rel=1e-12)


def test_train_deterministic():
    s = _toy()
    a = train(LinearNet(6, 2), s, TrainConfig(epochs=20, seed=4))
    b = train(LinearNet(6, 2), s, TrainConfig(epochs=20, seed=4))
    assert a.train_loss == b.train_loss and a.val_loss == b.val_loss


def test_train_diverges_raises():
    s = _toy()
    s = SampleSet([s.inputs[0] * 1e200], s.targets * 1e200, s.days)
    with pytest.raises(NumericalError, match="epoch"), np.errstate(over="ignore"):
        train(LinearNet(6, 2), s, TrainConfig(epochs=3))


def test_train_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(patience=0)
    with pytest.raises(ConfigurationError):
        TrainConfig(validation_fraction=1.0)


def test_train_fits_linear_map():
    s = _toy(64)
    net = LinearNet(6, 2)
    t0 = time.time()
    res = train(net, s, TrainConfig(epochs=600, learning_rate=0.05, validation_fraction=0.0, batch_size=16))
    assert res.train_loss[-1] < 1e-6 and time.time() - t0 < 30


def test_grad_check_eps_range():
    s = _toy()
    with pytest.raises(ValueError):
        grad_check(LinearNet(6, 2), [s.inputs[0]], s.targets, eps=0.1)


def test_sequential_grad(rng):
    seq = Sequential([ConvLayer(2, 3, 2, 1, rng=rng), ReLU(), MaxPool1d(2)])
    p_err, x_err = check(seq, rng.standard_normal((2, 8, 2)), rng)
    assert p_err < 1e-4 and x_err < 1e-4
