"""Central finite-difference gradient checks."""
from __future__ import annotations

import numpy as np

from .network import Network


def relative_error(a, b, floor: float = 1e-8) -> float:
    """``|a - b| / (|a| + |b|)`` with the denominator floored, so a gradient
    that is zero by construction (a bias feeding batch norm) does not score
    rounding noise against rounding noise."""
    a = np.ravel(a)
    b = np.ravel(b)
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


def check_network(network: Network, x, h: float = 1e-4, seed: int = 0) -> dict[str, float]:
    """Compare back-propagated gradients of ``sum(R * f(x))`` for a fixed
    random projection ``R`` against central differences.

    Returns the relative error per parameter tensor plus ``"input"``.
    Dropout masks are replayed by reseeding before every forward pass.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=network.dtype)

    def run(mode="train"):
        network.reset_rng(seed)
        return network.forward(x, mode)

    y = run()
    proj = rng.standard_normal(y.shape).astype(network.dtype)

    def objective():
        out = run()
        network._trained_batch = False
        for layer in network.layers:
            _clear(layer)
        return float(np.sum(out * proj))

    run()
    dx = network.backward(proj)
    analytic = {name: network.layers[int(name.split(".")[0])].grads[name.split(".", 2)[2]].copy()
                for name, _ in network.named_parameters()}
    errors = {}
    for name, p in network.named_parameters():
        num = np.zeros_like(p)
        flat = p.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = objective()
            flat[i] = old - h
            fm = objective()
            flat[i] = old
            nflat[i] = (fp - fm) / (2 * h)
        errors[name] = relative_error(analytic[name], num)

    num = np.zeros_like(x)
    xf = x.reshape(-1)
    nf = num.reshape(-1)
    for i in range(xf.size):
        old = xf[i]
        xf[i] = old + h
        fp = objective()
        xf[i] = old - h
        fm = objective()
        xf[i] = old
        nf[i] = (fp - fm) / (2 * h)
    errors["input"] = relative_error(dx, num)
    return errors


def _clear(layer):
    layer._cache = None
    for sub in ("fwd", "bwd"):
        if hasattr(layer, sub):
            getattr(layer, sub)._cache = None
