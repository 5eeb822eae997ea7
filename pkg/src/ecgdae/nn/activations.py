"""Elementwise activations as (forward, backward) pairs.

``backward(dy, x, y)`` receives the activation input and output so each
rule can use whichever is cheaper.
"""
from __future__ import annotations

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


sigmoid = _sigmoid


class Activation:
    name = "linear"

    def __init__(self, alpha: float = 0.0):
        self.alpha = alpha

    def forward(self, x):
        return x

    def backward(self, dy, x, y):
        return dy

    def config(self):
        return {"name": self.name}


class Relu(Activation):
    name = "relu"

    def forward(self, x):
        return np.maximum(x, 0)

    def backward(self, dy, x, y):
        return dy * (x > 0)


class LeakyRelu(Activation):
    name = "leaky_relu"

    def __init__(self, alpha: float = 0.3):
        self.alpha = alpha

    def forward(self, x):
        return np.where(x > 0, x, self.alpha * x)

    def backward(self, dy, x, y):
        return dy * np.where(x > 0, 1.0, self.alpha).astype(dy.dtype)

    def config(self):
        return {"name": self.name, "alpha": self.alpha}


class Sigmoid(Activation):
    name = "sigmoid"

    def forward(self, x):
        return _sigmoid(x)

    def backward(self, dy, x, y):
        return dy * y * (1 - y)


class ScaledSigmoid(Activation):
    """``2 * sigmoid(x) - 1``: a sigmoid stretched onto (-1, 1)."""

    name = "scaled_sigmoid"

    def forward(self, x):
        return 2.0 * _sigmoid(x) - 1.0

    def backward(self, dy, x, y):
        s = (y + 1.0) * 0.5
        return dy * 2.0 * s * (1 - s)


class Tanh(Activation):
    name = "tanh"

    def forward(self, x):
        return np.tanh(x)

    def backward(self, dy, x, y):
        return dy * (1 - y * y)


class Softmax(Activation):
    name = "softmax"

    def forward(self, x):
        e = np.exp(x - x.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)

    def backward(self, dy, x, y):
        return y * (dy - (dy * y).sum(axis=-1, keepdims=True))


_REGISTRY = {cls.name: cls for cls in (Activation, Relu, LeakyRelu, Sigmoid, ScaledSigmoid, Tanh, Softmax)}


def get(spec) -> Activation:
    if spec is None:
        return Activation()
    if isinstance(spec, Activation):
        return spec
    if isinstance(spec, dict):
        spec = dict(spec)
        cls = _REGISTRY[spec.pop("name")]
        return cls(**spec)
    if spec not in _REGISTRY:
        raise ValueError(f"unknown activation {spec!r}")
    return _REGISTRY[spec]()
