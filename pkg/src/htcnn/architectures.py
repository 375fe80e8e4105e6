"""Network builders: HTCNN A1/A2 and the TCN, 1-D CNN and stacked LSTM baselines.

Every network maps a list of (batch, t, f_j) inputs to a (batch, h) forecast.
HTCNN networks take the N individual-series matrices first and the aggregate
matrix last; the baselines take a single matrix.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigurationError, StructuralError
from .nn.layers import (
    Concat, ConvLayer, Dense, Flatten, Layer, MaxPool1d, Parameter, ReLU, Sequential, glorot_uniform,
)
from .nn.network import Network
from .nn.tcn import TcnBlock, conv_stage


class _Spec:
    kind = ""

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self)}

    def _positive(self, *names):
        for n in names:
            if getattr(self, n) < 1:
                raise ConfigurationError(f"{type(self).__name__}.{n} must be >= 1")


@dataclass(frozen=True)
class HtcnnSpec(_Spec):
    """Hyper-parameters of HTCNN A1 / A2.

    ``filters_individual`` and ``filters_aggregate`` are F' and F''. For A2,
    ``k_stages`` concatenation-and-convolution stages each hold one TCN block
    with F'' filters; ``tcn_blocks_aggregate`` is unused.
    """

    variant: str = "A1"
    n_series: int = 3
    t: int = 18
    f: int = 14
    f_agg: int = 7
    h: int = 18
    filters_individual: int = 32
    filters_aggregate: int = 16
    tcn_blocks_individual: int = 1
    tcn_blocks_aggregate: int = 1
    m: int = 2
    kernel_size: int = 3
    k_stages: int = 2
    dropout: float = 0.1
    kind = "htcnn"

    def __post_init__(self):
        if self.variant not in ("A1", "A2"):
            raise ConfigurationError(f"unknown HTCNN variant {self.variant!r}")
        self._positive("n_series", "t", "f", "f_agg", "h", "filters_individual", "filters_aggregate",
                       "tcn_blocks_individual", "tcn_blocks_aggregate", "kernel_size", "k_stages")
        if self.m < 0:
            raise ConfigurationError("m must be >= 0")
        if self.h != self.t:
            raise ConfigurationError(f"h ({self.h}) must equal t ({self.t})")
        if not 0 <= self.dropout < 1:
            raise ConfigurationError("dropout must be in [0, 1)")


@dataclass(frozen=True)
class TcnSpec(_Spec):
    t: int = 18
    f: int = 14
    h: int = 18
    filters: int = 32
    kernel_size: int = 3
    m: int = 2
    n_blocks: int = 1
    dropout: float = 0.1
    kind = "tcn"

    def __post_init__(self):
        self._positive("t", "f", "h", "filters", "kernel_size", "n_blocks")
        if self.m < 0 or not 0 <= self.dropout < 1:
            raise ConfigurationError("TcnSpec: m must be >= 0 and dropout in [0, 1)")


@dataclass(frozen=True)
class CnnSpec(_Spec):
    t: int = 18
    f: int = 14
    h: int = 18
    filters: int = 32
    kernel_size: int = 3
    n_layers: int = 2
    pool_size: int = 2
    kind = "cnn"

    def __post_init__(self):
        self._positive("t", "f", "h", "filters", "kernel_size", "n_layers", "pool_size")
        if self.pooled_length(self.n_layers) < 1:
            raise ConfigurationError(
                f"{self.n_layers} pooling layers of size {self.pool_size} empty a length-{self.t} input"
            )

    def pooled_length(self, layers):
        n = self.t
        for _ in range(layers):
            n //= self.pool_size
        return n


@dataclass(frozen=True)
class LstmSpec(_Spec):
    """Stacked LSTM with cell dimension ``d``."""

    t: int = 18
    f: int = 14
    h: int = 18
    d: int = 16
    n_layers: int = 2
    kind = "lstm"

    def __post_init__(self):
        self._positive("t", "f", "h", "d", "n_layers")


SPEC_TYPES = {cls.kind: cls for cls in (HtcnnSpec, TcnSpec, CnnSpec, LstmSpec)}


def spec_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in SPEC_TYPES:
        raise ConfigurationError(f"unknown network kind {kind!r}")
    cls = SPEC_TYPES[kind]
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigurationError(f"unknown {kind} spec fields: {sorted(unknown)}")
    return cls(**d)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# --- HTCNN ------------------------------------------------------------------


class HtcnnA1(Network):
    """Two parallel paths joined by a final fully connected layer.

    individual: concat -> conv stage (F') -> flatten -> dense(h, ReLU)
    aggregate:  conv stage (F'') -> flatten -> dense(h, ReLU)
    head:       concat the two h-vectors -> dense(h)
    """

    def __init__(self, spec: HtcnnSpec, seed=0):
        rng = _rng(seed)
        s = self.spec_obj = spec
        self.spec = spec.to_dict()
        self.n_inputs = s.n_series + 1
        self.concat_in = Concat()
        self.stage1 = conv_stage(s.f * s.n_series, s.filters_individual, s.tcn_blocks_individual,
                                 s.kernel_size, s.m, s.dropout, rng, name="stage1")
        self.stage2 = conv_stage(s.f_agg, s.filters_aggregate, s.tcn_blocks_aggregate,
                                 s.kernel_size, s.m, s.dropout, rng, name="stage2")
        self.flat1, self.flat2 = Flatten(), Flatten()
        self.fc1 = Dense(s.t * s.filters_individual, s.h, "relu", rng, name="fc1")
        self.fc2 = Dense(s.t * s.filters_aggregate, s.h, "relu", rng, name="fc2")
        self.concat_out = Concat()
        self.fc3 = Dense(2 * s.h, s.h, "linear", rng, name="fc3")

    def params(self):
        return (self.stage1.params() + self.fc1.params() + self.stage2.params()
                + self.fc2.params() + self.fc3.params())

    def individual_features(self, inputs, training=False):
        """Output of convolution stage (1): (batch, t, F')."""
        return self.stage1.forward(self.concat_in.forward(inputs[:-1]), training)

    def forward(self, inputs, training=False):
        _check_inputs(inputs, self.n_inputs)
        a = self.fc1.forward(self.flat1.forward(self.individual_features(inputs, training)), training)
        b = self.fc2.forward(self.flat2.forward(self.stage2.forward(inputs[-1], training)), training)
        return self.fc3.forward(self.concat_out.forward([a, b]), training)

    def backward(self, grad):
        ga, gb = self.concat_out.backward(self.fc3.backward(grad))
        g_agg = self.stage2.backward(self.flat2.backward(self.fc2.backward(gb)))
        g_ind = self.stage1.backward(self.flat1.backward(self.fc1.backward(ga)))
        return self.concat_in.backward(g_ind) + [g_agg]


class HtcnnA2(Network):
    """Individual features are re-concatenated after every TCN stage.

    feat = conv stage (1) on the concatenated individual inputs (t x F')
    z_1  = concat(aggregate input, feat)
    stage s: out_s = TCN block (F'') on z_s; z_{s+1} = concat(out_s, feat)
    The last stage's TCN output is flattened and mapped to h by a dense layer.
    """

    def __init__(self, spec: HtcnnSpec, seed=0):
        rng = _rng(seed)
        s = self.spec_obj = spec
        self.spec = spec.to_dict()
        self.n_inputs = s.n_series + 1
        self.concat_in = Concat()
        self.stage1 = conv_stage(s.f * s.n_series, s.filters_individual, s.tcn_blocks_individual,
                                 s.kernel_size, s.m, s.dropout, rng, name="stage1")
        self.concats = [Concat() for _ in range(s.k_stages)]
        self.stages = []
        width = s.f_agg + s.filters_individual
        for k in range(s.k_stages):
            self.stages.append(TcnBlock(width, s.filters_aggregate, s.kernel_size, s.m, s.dropout,
                                        rng, name=f"cc{k}"))
            width = s.filters_aggregate + s.filters_individual
        self.flat = Flatten()
        self.fc = Dense(s.t * s.filters_aggregate, s.h, "linear", rng, name="fc")

    def stage_input_widths(self):
        return [blk.layers[0].conv1.in_channels for blk in self.stages]

    def params(self):
        ps = self.stage1.params()
        for blk in self.stages:
            ps += blk.params()
        return ps + self.fc.params()

    def forward(self, inputs, training=False):
        _check_inputs(inputs, self.n_inputs)
        feat = self.stage1.forward(self.concat_in.forward(inputs[:-1]), training)
        z = self.concats[0].forward([inputs[-1], feat])
        for k, blk in enumerate(self.stages):
            out = blk.forward(z, training)
            if k + 1 < len(self.stages):
                z = self.concats[k + 1].forward([out, feat])
        return self.fc.forward(self.flat.forward(out), training)

    def backward(self, grad):
        g = self.flat.backward(self.fc.backward(grad))
        g_feat = 0.0
        for k in range(len(self.stages) - 1, -1, -1):
            gz = self.stages[k].backward(g)
            g, gf = self.concats[k].backward(gz)
            g_feat = g_feat + gf
        g_agg = g
        return self.concat_in.backward(self.stage1.backward(g_feat)) + [g_agg]


def _check_inputs(inputs, n):
    if len(inputs) != n:
        raise StructuralError(f"network expects {n} inputs, got {len(inputs)}")


def build_htcnn_a1(spec: HtcnnSpec, seed=0) -> HtcnnA1:
    if spec.variant != "A1":
        raise ConfigurationError("build_htcnn_a1 needs variant A1")
    return HtcnnA1(spec, seed)


def build_htcnn_a2(spec: HtcnnSpec, seed=0) -> HtcnnA2:
    if spec.variant != "A2":
        raise ConfigurationError("build_htcnn_a2 needs variant A2")
    return HtcnnA2(spec, seed)


# --- single-input baselines -------------------------------------------------


class SequentialNet(Network):
    """A single-input network: a Sequential body on ``inputs[0]``."""

    n_inputs = 1

    def __init__(self, body: Sequential, spec):
        self.body = body
        self.spec_obj = spec
        self.spec = spec.to_dict()

    def params(self):
        return self.body.params()

    def forward(self, inputs, training=False):
        _check_inputs(inputs, 1)
        return self.body.forward(inputs[0], training)

    def backward(self, grad):
        return [self.body.backward(grad)]


def build_tcn(spec: TcnSpec, seed=0) -> SequentialNet:
    """TCN block(s) -> flatten -> dense(h)."""
    rng = _rng(seed)
    stage = conv_stage(spec.f, spec.filters, spec.n_blocks, spec.kernel_size, spec.m, spec.dropout, rng, name="tcn")
    head = Dense(spec.t * spec.filters, spec.h, "linear", rng, name="fc")
    return SequentialNet(Sequential([stage, Flatten(), head]), spec)


def build_cnn1d(spec: CnnSpec, seed=0) -> SequentialNet:
    """(conv -> ReLU -> max-pool) x n_layers -> flatten -> dense(h)."""
    rng = _rng(seed)
    layers = []
    c = spec.f
    for i in range(spec.n_layers):
        layers += [ConvLayer(c, spec.filters, spec.kernel_size, 1, weight_norm=False, rng=rng, name=f"conv{i}"),
                   ReLU(), MaxPool1d(spec.pool_size)]
        c = spec.filters
    n = spec.pooled_length(spec.n_layers)
    layers += [Flatten(), Dense(n * spec.filters, spec.h, "linear", rng, name="fc")]
    return SequentialNet(Sequential(layers), spec)


# --- LSTM -------------------------------------------------------------------


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_cell_step(x_t, h_prev, c_prev, wx, wh, b):
    """One LSTM step for row-vector batches.

    ``wx`` (n_in, 4d), ``wh`` (d, 4d) and ``b`` (4d) hold the input, output,
    forget and candidate blocks in that column order:
        i = sigmoid(h W_ih + x W_ix + b_i)
        o = sigmoid(h W_oh + x W_ox + b_o)
        f = sigmoid(h W_fh + x W_fx + b_f)
        c = i * tanh(h W_ch + x W_cx + b_c) + f * c_prev
        h = o * tanh(c)
    Returns (h_t, c_t, gates) where gates = (i, o, f, candidate).
    """
    d = wh.shape[0]
    z = x_t @ wx + h_prev @ wh + b
    i = _sigmoid(z[:, :d])
    o = _sigmoid(z[:, d:2 * d])
    f = _sigmoid(z[:, 2 * d:3 * d])
    cand = np.tanh(z[:, 3 * d:])
    c = i * cand + f * c_prev
    return o * np.tanh(c), c, (i, o, f, cand)


class LstmLayer(Layer):
    """One LSTM layer over a (batch, T, n_in) sequence, returning all hidden states."""

    def __init__(self, n_in, d, rng=None, name="lstm"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.d = n_in, d
        self.wx = Parameter(f"{name}.wx", glorot_uniform(rng, (n_in, 4 * d), n_in, d))
        self.wh = Parameter(f"{name}.wh", glorot_uniform(rng, (d, 4 * d), d, d))
        self.b = Parameter(f"{name}.b", np.zeros(4 * d))

    def params(self):
        return [self.wx, self.wh, self.b]

    def forward(self, x, training=False):
        B, T, _ = x.shape
        h = np.zeros((B, self.d))
        c = np.zeros((B, self.d))
        self._cache = []
        out = np.empty((B, T, self.d))
        for t in range(T):
            h_new, c_new, gates = lstm_cell_step(x[:, t], h, c, self.wx.value, self.wh.value, self.b.value)
            self._cache.append((x[:, t], h, c, c_new, gates))
            h, c = h_new, c_new
            out[:, t] = h
        return out

    def backward(self, grad):
        B, T, d = grad.shape
        dx = np.empty((B, T, self.n_in))
        dh_next = np.zeros((B, d))
        dc_next = np.zeros((B, d))
        for t in range(T - 1, -1, -1):
            x_t, h_prev, c_prev, c, (i, o, f, cand) = self._cache[t]
            tc = np.tanh(c)
            dh = grad[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = np.concatenate([
                dc * cand * i * (1.0 - i),
                dh * tc * o * (1.0 - o),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - cand * cand),
            ], axis=1)
            self.wx.grad += x_t.T @ dz
            self.wh.grad += h_prev.T @ dz
            self.b.grad += dz.sum(axis=0)
            dx[:, t] = dz @ self.wx.value.T
            dh_next = dz @ self.wh.value.T
            dc_next = dc * f
        return dx


class _LastStep(Layer):
    def forward(self, x, training=False):
        self._shape = x.shape
        return x[:, -1, :]

    def backward(self, grad):
        g = np.zeros(self._shape)
        g[:, -1, :] = grad
        return g


def build_lstm(spec: LstmSpec, seed=0) -> SequentialNet:
    """Stacked LSTM; the last layer's final hidden state feeds dense(h)."""
    rng = _rng(seed)
    layers = []
    n_in = spec.f
    for i in range(spec.n_layers):
        layers.append(LstmLayer(n_in, spec.d, rng, name=f"lstm{i}"))
        n_in = spec.d
    layers += [_LastStep(), Dense(spec.d, spec.h, "linear", rng, name="fc")]
    return SequentialNet(Sequential(layers), spec)


# --- registry ---------------------------------------------------------------


def build_network(spec, seed=0) -> Network:
    """Build any network from a spec object or its dict form."""
    if isinstance(spec, dict):
        spec = spec_from_dict(spec)
    if isinstance(spec, HtcnnSpec):
        return HtcnnA1(spec, seed) if spec.variant == "A1" else HtcnnA2(spec, seed)
    if isinstance(spec, TcnSpec):
        return build_tcn(spec, seed)
    if isinstance(spec, CnnSpec):
        return build_cnn1d(spec, seed)
    if isinstance(spec, LstmSpec):
        return build_lstm(spec, seed)
    raise ConfigurationError(f"cannot build network from {spec!r}")
