"""Layers with hand-written forward and backward passes.

Arrays are channels-last: sequences are ``(batch, length, channels)``.
Every layer is built against an input shape (without the batch axis),
allocates its parameters and matching gradient buffers once, and from then
on updates them in place so optimizers and serializers can hold references.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import StateError
from . import activations


def lecun_uniform(rng, shape, fan_in, dtype):
    """U(-a, a) with a = sqrt(3 / fan_in), i.e. variance 1 / fan_in."""
    a = math.sqrt(3.0 / fan_in)
    return rng.uniform(-a, a, size=shape).astype(dtype)


def same_padding(length: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """(output length, left pad, right pad) for TF-style "same" padding."""
    out = -(-length // stride)
    total = max((out - 1) * stride + kernel - length, 0)
    return out, total // 2, total - total // 2


COUNTERS = frozenset({"steps"})


class Layer:
    kind = "Layer"
    has_training_behaviour = False

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}
        self.input_shape: Optional[tuple] = None
        self.output_shape: Optional[tuple] = None
        self._cache = None

    # -- construction -------------------------------------------------
    def build(self, input_shape, rng, dtype):
        self.input_shape = tuple(input_shape)
        self.output_shape = self._build(self.input_shape, rng, dtype)
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)
        return self.output_shape

    def _build(self, input_shape, rng, dtype):
        return input_shape

    def config(self) -> dict:
        return {}

    def count_params(self) -> tuple[int, int]:
        """(trainable, non-trainable); bookkeeping counters are not weights."""
        return (sum(p.size for p in self.params.values()),
                sum(s.size for k, s in self.state.items() if k not in COUNTERS))

    def reset_rng(self, seed):
        pass

    # -- computation --------------------------------------------------
    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dy):
        if self._cache is None:
            raise StateError(f"{self.kind}.backward called without a training-mode forward pass")
        dx = self._backward(dy)
        self._cache = None
        return dx

    def _backward(self, dy):
        raise NotImplementedError

    def __repr__(self):
        cfg = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{self.kind}({cfg})"


class ActivationLayer(Layer):
    kind = "Activation"

    def __init__(self, activation="linear"):
        super().__init__()
        self.act = activations.get(activation)

    def config(self):
        return {"activation": self.act.config()}

    def forward(self, x, training=False):
        y = self.act.forward(x)
        if training:
            self._cache = (x, y)
        return y

    def _backward(self, dy):
        x, y = self._cache
        return self.act.backward(dy, x, y)


class Dense(Layer):
    """Affine map over the last axis, optionally followed by an activation."""

    kind = "Dense"

    def __init__(self, units: int, activation=None, use_bias: bool = True):
        super().__init__()
        self.units = int(units)
        self.act = activations.get(activation)
        self.use_bias = use_bias

    def config(self):
        return {"units": self.units, "activation": self.act.config(), "use_bias": self.use_bias}

    def _build(self, input_shape, rng, dtype):
        d = input_shape[-1]
        self.params["W"] = lecun_uniform(rng, (d, self.units), d, dtype)
        if self.use_bias:
            self.params["b"] = np.zeros(self.units, dtype=dtype)
        return input_shape[:-1] + (self.units,)

    def forward(self, x, training=False):
        z = x @ self.params["W"]
        if self.use_bias:
            z = z + self.params["b"]
        y = self.act.forward(z)
        if training:
            self._cache = (x, z, y)
        return y

    def _backward(self, dy):
        x, z, y = self._cache
        dz = self.act.backward(dy, z, y)
        d = x.shape[-1]
        self.grads["W"][...] = x.reshape(-1, d).T @ dz.reshape(-1, self.units)
        if self.use_bias:
            self.grads["b"][...] = dz.reshape(-1, self.units).sum(axis=0)
        return dz @ self.params["W"].T


class Conv1D(Layer):
    kind = "Conv1D"

    def __init__(self, filters: int, kernel_size: int, strides: int = 1, padding: str = "valid", activation=None):
        super().__init__()
        if padding not in ("valid", "same"):
            raise ValueError("padding must be 'valid' or 'same'")
        self.filters, self.kernel_size, self.strides, self.padding = int(filters), int(kernel_size), int(strides), padding
        self.act = activations.get(activation)

    def config(self):
        return {"filters": self.filters, "kernel_size": self.kernel_size, "strides": self.strides,
                "padding": self.padding, "activation": self.act.config()}

    def _geometry(self, length):
        k, s = self.kernel_size, self.strides
        if self.padding == "same":
            return same_padding(length, k, s)
        return (length - k) // s + 1, 0, 0

    def _build(self, input_shape, rng, dtype):
        length, c = input_shape
        k = self.kernel_size
        self.params["W"] = lecun_uniform(rng, (k, c, self.filters), k * c, dtype)
        self.params["b"] = np.zeros(self.filters, dtype=dtype)
        out, _, _ = self._geometry(length)
        if out < 1:
            raise ValueError(f"Conv1D kernel {k} does not fit input length {length}")
        return (out, self.filters)

    def forward(self, x, training=False):
        b, length, c = x.shape
        out, pl, pr = self._geometry(length)
        xp = np.pad(x, ((0, 0), (pl, pr), (0, 0))) if pl or pr else x
        win = sliding_window_view(xp, self.kernel_size, axis=1)[:, :: self.strides][:, :out]  # (b, out, c, k)
        cols = win.transpose(0, 1, 3, 2).reshape(b * out, self.kernel_size * c)
        z = (cols @ self.params["W"].reshape(-1, self.filters)).reshape(b, out, self.filters) + self.params["b"]
        y = self.act.forward(z)
        if training:
            self._cache = (x.shape, xp.shape, pl, cols, z, y)
        return y

    def _backward(self, dy):
        xshape, xpshape, pl, cols, z, y = self._cache
        b, length, c = xshape
        k, s = self.kernel_size, self.strides
        dz = self.act.backward(dy, z, y)
        out = dz.shape[1]
        dz2 = dz.reshape(-1, self.filters)
        self.grads["W"][...] = (cols.T @ dz2).reshape(k, c, self.filters)
        self.grads["b"][...] = dz2.sum(axis=0)
        dcols = (dz2 @ self.params["W"].reshape(-1, self.filters).T).reshape(b, out, k, c)
        dxp = np.zeros(xpshape, dtype=dy.dtype)
        for j in range(k):
            dxp[:, j : j + s * (out - 1) + 1 : s] += dcols[:, :, j]
        return dxp[:, pl : pl + length]


class Deconv1D(Layer):
    """Transposed 1-D convolution (the adjoint of a strided convolution)."""

    kind = "Deconv1D"

    def __init__(self, filters: int, kernel_size: int, strides: int = 2, padding: str = "same", activation=None):
        super().__init__()
        if padding not in ("valid", "same"):
            raise ValueError("padding must be 'valid' or 'same'")
        self.filters, self.kernel_size, self.strides, self.padding = int(filters), int(kernel_size), int(strides), padding
        self.act = activations.get(activation)

    def config(self):
        return {"filters": self.filters, "kernel_size": self.kernel_size, "strides": self.strides,
                "padding": self.padding, "activation": self.act.config()}

    def _geometry(self, length):
        k, s = self.kernel_size, self.strides
        full = (length - 1) * s + k
        if self.padding == "same":
            out = length * s
            crop = max(full - out, 0)
            return full, out, crop // 2
        return full, full, 0

    def _build(self, input_shape, rng, dtype):
        length, c = input_shape
        k = self.kernel_size
        self.params["W"] = lecun_uniform(rng, (k, c, self.filters), c * k, dtype)
        self.params["b"] = np.zeros(self.filters, dtype=dtype)
        return (self._geometry(length)[1], self.filters)

    def forward(self, x, training=False):
        b, length, c = x.shape
        k, s = self.kernel_size, self.strides
        full, out, left = self._geometry(length)
        wcat = self.params["W"].transpose(1, 0, 2).reshape(c, k * self.filters)
        contrib = (x.reshape(-1, c) @ wcat).reshape(b, length, k, self.filters)
        yf = np.zeros((b, max(full, left + out), self.filters), dtype=x.dtype)
        for j in range(k):
            yf[:, j : j + s * (length - 1) + 1 : s] += contrib[:, :, j]
        z = yf[:, left : left + out] + self.params["b"]
        y = self.act.forward(z)
        if training:
            self._cache = (x, z, y)
        return y

    def _backward(self, dy):
        x, z, y = self._cache
        b, length, c = x.shape
        k, s = self.kernel_size, self.strides
        full, out, left = self._geometry(length)
        dz = self.act.backward(dy, z, y)
        self.grads["b"][...] = dz.reshape(-1, self.filters).sum(axis=0)
        dyf = np.zeros((b, max(full, left + out), self.filters), dtype=dz.dtype)
        dyf[:, left : left + out] = dz
        dcontrib = np.stack([dyf[:, j : j + s * (length - 1) + 1 : s] for j in range(k)], axis=2)  # (b, L, k, F)
        dc2 = dcontrib.reshape(-1, k * self.filters)
        dwcat = x.reshape(-1, c).T @ dc2
        self.grads["W"][...] = dwcat.reshape(c, k, self.filters).transpose(1, 0, 2)
        wcat = self.params["W"].transpose(1, 0, 2).reshape(c, k * self.filters)
        return (dc2 @ wcat.T).reshape(b, length, c)


class MaxPool1D(Layer):
    kind = "MaxPool1D"

    def __init__(self, pool_size: int = 2, strides: Optional[int] = None, padding: str = "valid"):
        super().__init__()
        self.pool_size = int(pool_size)
        self.strides = int(strides or pool_size)
        self.padding = padding

    def config(self):
        return {"pool_size": self.pool_size, "strides": self.strides, "padding": self.padding}

    def _geometry(self, length):
        if self.padding == "same":
            return same_padding(length, self.pool_size, self.strides)
        return (length - self.pool_size) // self.strides + 1, 0, 0

    def _build(self, input_shape, rng, dtype):
        length, c = input_shape
        return (self._geometry(length)[0], c)

    def forward(self, x, training=False):
        b, length, c = x.shape
        out, pl, pr = self._geometry(length)
        xp = np.pad(x, ((0, 0), (pl, pr), (0, 0)), constant_values=-np.inf) if pl or pr else x
        win = sliding_window_view(xp, self.pool_size, axis=1)[:, :: self.strides][:, :out]  # (b, out, c, p)
        arg = win.argmax(axis=-1)
        y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        if training:
            self._cache = (x.shape, xp.shape, pl, arg)
        return y

    def _backward(self, dy):
        xshape, xpshape, pl, arg = self._cache
        out = dy.shape[1]
        s = self.strides
        dxp = np.zeros(xpshape, dtype=dy.dtype)
        for j in range(self.pool_size):
            dxp[:, j : j + s * (out - 1) + 1 : s] += dy * (arg == j)
        return dxp[:, pl : pl + xshape[1]]


class BatchNorm(Layer):
    """Normalizes each feature over the batch (and length) axes.

    The moving statistics are bias-corrected exponential averages: after
    ``t`` updates each one weighs past batches by ``momentum`` per step,
    normalized by ``1 - momentum**t``, so the initial values carry no
    weight even when only a few hundred updates have been made.
    """

    kind = "BatchNorm"
    has_training_behaviour = True

    def __init__(self, momentum: float = 0.99, epsilon: float = 1e-3):
        super().__init__()
        self.momentum = momentum
        self.epsilon = epsilon

    def config(self):
        return {"momentum": self.momentum, "epsilon": self.epsilon}

    def _build(self, input_shape, rng, dtype):
        c = input_shape[-1]
        self.params["gamma"] = np.ones(c, dtype=dtype)
        self.params["beta"] = np.zeros(c, dtype=dtype)
        self.state["moving_mean"] = np.zeros(c, dtype=dtype)
        self.state["moving_variance"] = np.ones(c, dtype=dtype)
        self.state["steps"] = np.zeros(1, dtype=dtype)
        return input_shape

    def forward(self, x, training=False):
        g, b = self.params["gamma"], self.params["beta"]
        if not training:
            inv = 1.0 / np.sqrt(self.state["moving_variance"] + self.epsilon)
            return (x - self.state["moving_mean"]) * (inv * g) + b
        axes = tuple(range(x.ndim - 1))
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        inv = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - mu) * inv
        m = self.momentum
        self.state["steps"] += 1
        w = (1 - m) / (1 - m ** float(self.state["steps"][0]))
        self.state["moving_mean"][...] += w * (mu - self.state["moving_mean"])
        self.state["moving_variance"][...] += w * (var - self.state["moving_variance"])
        self._cache = (xhat, inv, axes)
        return xhat * g + b

    def _backward(self, dy):
        xhat, inv, axes = self._cache
        n = xhat.size // xhat.shape[-1]
        self.grads["gamma"][...] = (dy * xhat).sum(axis=axes)
        self.grads["beta"][...] = dy.sum(axis=axes)
        dxhat = dy * self.params["gamma"]
        return inv / n * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))


class Dropout(Layer):
    kind = "Dropout"
    has_training_behaviour = True

    def __init__(self, rate: float):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = float(rate)
        self.rng = np.random.default_rng(0)

    def config(self):
        return {"rate": self.rate}

    def reset_rng(self, seed):
        self.rng = np.random.default_rng(seed)

    def forward(self, x, training=False):
        if not training or self.rate == 0:
            if training:
                self._cache = 1.0
            return x
        mask = (self.rng.random(x.shape) >= self.rate).astype(x.dtype) / (1.0 - self.rate)
        self._cache = mask
        return x * mask

    def _backward(self, dy):
        return dy * self._cache


class Flatten(Layer):
    kind = "Flatten"

    def _build(self, input_shape, rng, dtype):
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False):
        if training:
            self._cache = x.shape
        return x.reshape(len(x), -1)

    def _backward(self, dy):
        return dy.reshape(self._cache)


class Reshape(Layer):
    kind = "Reshape"

    def __init__(self, target_shape):
        super().__init__()
        self.target_shape = tuple(int(d) for d in target_shape)

    def config(self):
        return {"target_shape": list(self.target_shape)}

    def _build(self, input_shape, rng, dtype):
        if np.prod(input_shape) != np.prod(self.target_shape):
            raise ValueError(f"cannot reshape {input_shape} to {self.target_shape}")
        return self.target_shape

    def forward(self, x, training=False):
        if training:
            self._cache = x.shape
        return x.reshape((len(x),) + self.target_shape)

    def _backward(self, dy):
        return dy.reshape(self._cache)


class RepeatVector(Layer):
    kind = "RepeatVector"

    def __init__(self, n: int):
        super().__init__()
        self.n = int(n)

    def config(self):
        return {"n": self.n}

    def _build(self, input_shape, rng, dtype):
        return (self.n,) + tuple(input_shape)

    def forward(self, x, training=False):
        if training:
            self._cache = True
        return np.repeat(x[:, None, :], self.n, axis=1)

    def _backward(self, dy):
        return dy.sum(axis=1)


class LSTM(Layer):
    """Long short-term memory over ``(batch, time, features)``.

    Gate order is input, forget, cell, output.  ``dual_bias`` keeps separate
    input and recurrent bias vectors (their sum is what matters), which is
    how some frameworks lay the weights out and changes only the parameter
    count.
    """

    kind = "LSTM"

    def __init__(self, units: int, return_sequences: bool = False, dual_bias: bool = False, go_backwards: bool = False):
        super().__init__()
        self.units = int(units)
        self.return_sequences = return_sequences
        self.dual_bias = dual_bias
        self.go_backwards = go_backwards

    def config(self):
        return {"units": self.units, "return_sequences": self.return_sequences,
                "dual_bias": self.dual_bias, "go_backwards": self.go_backwards}

    def _build(self, input_shape, rng, dtype):
        t, d = input_shape
        h = self.units
        self.params["W"] = lecun_uniform(rng, (d, 4 * h), d, dtype)
        self.params["U"] = lecun_uniform(rng, (h, 4 * h), h, dtype)
        b = np.zeros(4 * h, dtype=dtype)
        b[h : 2 * h] = 1.0  # forget-gate bias
        self.params["b"] = b
        if self.dual_bias:
            self.params["b_rec"] = np.zeros(4 * h, dtype=dtype)
        return (t, h) if self.return_sequences else (h,)

    def forward(self, x, training=False):
        if self.go_backwards:
            x = x[:, ::-1]
        bsz, t_len, _ = x.shape
        h_n = self.units
        bias = self.params["b"] + self.params["b_rec"] if self.dual_bias else self.params["b"]
        xw = x @ self.params["W"] + bias
        U = self.params["U"]
        h = np.zeros((bsz, h_n), dtype=x.dtype)
        c = np.zeros((bsz, h_n), dtype=x.dtype)
        hs = np.empty((bsz, t_len, h_n), dtype=x.dtype)
        # sigmoid(z) = (1 + tanh(z / 2)) / 2, so all four gates take one tanh
        scale = np.full(4 * h_n, 0.5, dtype=x.dtype)
        scale[2 * h_n : 3 * h_n] = 1.0
        xw *= scale
        Us = U * scale
        if training:
            cs = np.empty_like(hs)
            gates = np.empty((bsz, t_len, 4 * h_n), dtype=x.dtype)
        else:
            gate = np.empty((bsz, 4 * h_n), dtype=x.dtype)
        for t in range(t_len):
            a = gates[:, t] if training else gate
            np.tanh(xw[:, t] + h @ Us, out=a)
            a[:, : 2 * h_n] += 1.0
            a[:, : 2 * h_n] *= 0.5
            a[:, 3 * h_n :] += 1.0
            a[:, 3 * h_n :] *= 0.5
            i = a[:, :h_n]
            f = a[:, h_n : 2 * h_n]
            g = a[:, 2 * h_n : 3 * h_n]
            o = a[:, 3 * h_n :]
            c = f * c + i * g
            h = o * np.tanh(c)
            hs[:, t] = h
            if training:
                cs[:, t] = c
        if training:
            self._cache = (x, hs, cs, gates)
        if self.return_sequences:
            return hs[:, ::-1] if self.go_backwards else hs
        return h

    def _backward(self, dy):
        x, hs, cs, gates = self._cache
        bsz, t_len, _ = x.shape
        H = self.units
        U = self.params["U"]
        if self.return_sequences:
            dhs = dy[:, ::-1] if self.go_backwards else dy
        else:
            dhs = None
        dxw = np.empty((bsz, t_len, 4 * H), dtype=dy.dtype)
        dU = np.zeros_like(U)
        dh_next = np.zeros((bsz, H), dtype=dy.dtype) if dhs is not None else dy.copy()
        dc_next = np.zeros((bsz, H), dtype=dy.dtype)
        zero = np.zeros((bsz, H), dtype=dy.dtype)
        for t in range(t_len - 1, -1, -1):
            dh = dh_next + dhs[:, t] if dhs is not None else dh_next
            i = gates[:, t, :H]
            f = gates[:, t, H : 2 * H]
            g = gates[:, t, 2 * H : 3 * H]
            o = gates[:, t, 3 * H :]
            c = cs[:, t]
            c_prev = cs[:, t - 1] if t else zero
            h_prev = hs[:, t - 1] if t else zero
            tc = np.tanh(c)
            dc = dh * o * (1 - tc * tc) + dc_next
            dz = dxw[:, t]
            dz[:, :H] = dc * g * i * (1 - i)
            dz[:, H : 2 * H] = dc * c_prev * f * (1 - f)
            dz[:, 2 * H : 3 * H] = dc * i * (1 - g * g)
            dz[:, 3 * H :] = dh * tc * o * (1 - o)
            dU += h_prev.T @ dz
            dh_next = dz @ U.T
            dc_next = dc * f
        d = x.shape[-1]
        self.grads["W"][...] = x.reshape(-1, d).T @ dxw.reshape(-1, 4 * H)
        self.grads["U"][...] = dU
        db = dxw.reshape(-1, 4 * H).sum(axis=0)
        self.grads["b"][...] = db
        if self.dual_bias:
            self.grads["b_rec"][...] = db
        dx = dxw @ self.params["W"].T
        return dx[:, ::-1] if self.go_backwards else dx


class Bidirectional(Layer):
    """Runs an LSTM forwards and a twin backwards, concatenating features."""

    kind = "Bidirectional"

    def __init__(self, units: int, return_sequences: bool = False, dual_bias: bool = False):
        super().__init__()
        self.fwd = LSTM(units, return_sequences, dual_bias)
        self.bwd = LSTM(units, return_sequences, dual_bias, go_backwards=True)

    def config(self):
        return {"units": self.fwd.units, "return_sequences": self.fwd.return_sequences,
                "dual_bias": self.fwd.dual_bias}

    def _build(self, input_shape, rng, dtype):
        out = self.fwd.build(input_shape, rng, dtype)
        self.bwd.build(input_shape, rng, dtype)
        for prefix, sub in (("forward", self.fwd), ("backward", self.bwd)):
            for k in sub.params:
                self.params[f"{prefix}/{k}"] = sub.params[k]
        return out[:-1] + (2 * out[-1],)

    def build(self, input_shape, rng, dtype):
        shape = super().build(input_shape, rng, dtype)
        for prefix, sub in (("forward", self.fwd), ("backward", self.bwd)):
            for k in sub.grads:
                self.grads[f"{prefix}/{k}"] = sub.grads[k]
        return shape

    def forward(self, x, training=False):
        yf = self.fwd.forward(x, training)
        yb = self.bwd.forward(x, training)
        if training:
            self._cache = True
        return np.concatenate([yf, yb], axis=-1)

    def _backward(self, dy):
        h = self.fwd.units
        return self.fwd.backward(dy[..., :h]) + self.bwd.backward(dy[..., h:])


LAYER_TYPES = {cls.kind: cls for cls in (
    ActivationLayer, Dense, Conv1D, Deconv1D, MaxPool1D, BatchNorm, Dropout, Flatten,
    Reshape, RepeatVector, LSTM, Bidirectional,
)}


def layer_from_config(kind: str, cfg: dict) -> Layer:
    if kind not in LAYER_TYPES:
        raise ValueError(f"unknown layer kind {kind!r}")
    return LAYER_TYPES[kind](**cfg)
