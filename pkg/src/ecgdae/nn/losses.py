"""Loss functions returning ``(value, gradient w.r.t. prediction)``."""
from __future__ import annotations

import numpy as np

EPS = 1e-7


def mse(pred, target):
    diff = pred - target
    n = diff.size
    return float(np.mean(diff * diff)), (2.0 / n) * diff


def categorical_crossentropy(probs, onehot, renormalize: bool = True):
    """Mean cross-entropy over the batch.

    With ``renormalize`` the predictions are first divided by their row sum,
    so independent sigmoid heads can be scored as a distribution.
    """
    s = np.clip(probs, EPS, 1.0)
    y = onehot.astype(s.dtype)
    b = len(s)
    if renormalize:
        tot = s.sum(axis=-1, keepdims=True)
        p = s / tot
        value = -np.sum(y * np.log(p)) / b
        grad = (-y / s + y.sum(axis=-1, keepdims=True) / tot) / b
    else:
        value = -np.sum(y * np.log(s)) / b
        grad = -y / s / b
    grad = np.where((probs < EPS) | (probs > 1.0), 0.0, grad).astype(probs.dtype)
    return float(value), grad


def renormalized(probs):
    s = np.clip(probs, EPS, None)
    return s / s.sum(axis=-1, keepdims=True)


LOSSES = {"mse": mse, "cce": categorical_crossentropy}
