from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import EcgDaeError, ShapeError, StateError
from .layers import Layer


class NonFiniteError(EcgDaeError):
    """A forward or backward pass produced NaN or Inf."""


@dataclass
class ParamCount:
    per_layer: list[tuple[str, tuple, int]]  # (layer kind, output shape, count)
    trainable: int
    non_trainable: int

    @property
    def total(self) -> int:
        return self.trainable + self.non_trainable


class Network:
    """An ordered stack of layers built against a fixed input shape."""

    def __init__(self, layers: Sequence[Layer], input_shape, name: str = "", dtype=np.float32,
                 seed: int = 0, train_config=None, metadata: Optional[dict] = None):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.name = name
        self.dtype = np.dtype(dtype)
        self.seed = seed
        self.train_config = train_config
        self.metadata = dict(metadata or {})
        self._trained_batch = False
        self.build(seed)

    def build(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.build(shape, rng, self.dtype)
        self.output_shape = shape
        self.reset_rng(seed)
        return self

    def reset_rng(self, seed: int):
        ss = np.random.SeedSequence(seed)
        for layer, child in zip(self.layers, ss.spawn(len(self.layers))):
            layer.reset_rng(int(child.generate_state(1)[0]))

    # ------------------------------------------------------------------
    def shape_table(self) -> list[tuple[str, tuple]]:
        return [(layer.kind, layer.output_shape) for layer in self.layers]

    def forward(self, x, mode: str = "infer"):
        if mode not in ("train", "infer"):
            raise ValueError("mode must be 'train' or 'infer'")
        x = np.asarray(x)
        if x.ndim == 0 or tuple(x.shape[1:]) != self.input_shape:
            rows = "; ".join(f"{i}:{l.kind} expects {l.input_shape}" for i, l in enumerate(self.layers))
            raise ShapeError(
                f"input shape {tuple(x.shape[1:]) if x.ndim else ()} does not match expected "
                f"{self.input_shape} (per layer: {rows})"
            )
        x = x.astype(self.dtype, copy=False)
        training = mode == "train"
        for i, layer in enumerate(self.layers):
            x = layer.forward(x, training)
            if not np.all(np.isfinite(x)):
                raise NonFiniteError(f"non-finite values after layer {i} ({layer.kind})")
        self._trained_batch = training
        return x

    __call__ = forward

    def backward(self, loss_grad):
        """Back-propagate ``loss_grad``; returns the gradient w.r.t. the input.

        Parameter gradients land in each layer's ``grads`` buffers (see
        :meth:`gradients`).
        """
        if not self._trained_batch:
            raise StateError("backward requires a preceding forward pass in train mode")
        g = np.asarray(loss_grad, dtype=self.dtype)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        self._trained_batch = False
        return g

    def predict(self, x, batch_size: int = 256):
        x = np.asarray(x)
        if len(x) == 0:
            return np.zeros((0,) + tuple(self.output_shape), dtype=self.dtype)
        return np.concatenate([self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)])

    # ------------------------------------------------------------------
    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params.values()]

    def gradients(self) -> list[np.ndarray]:
        return [layer.grads[k] for layer in self.layers for k in layer.params]

    def named_parameters(self):
        for i, layer in enumerate(self.layers):
            for k, p in layer.params.items():
                yield f"{i}.{layer.kind}.{k}", p

    def states(self) -> list[np.ndarray]:
        return [s for layer in self.layers for s in layer.state.values()]

    def get_weights(self) -> list[np.ndarray]:
        return [a.copy() for a in self.parameters() + self.states()]

    def set_weights(self, weights):
        arrays = self.parameters() + self.states()
        if len(weights) != len(arrays):
            raise ValueError("weight list does not match network")
        for a, w in zip(arrays, weights):
            a[...] = w

    def count_params(self) -> ParamCount:
        rows = []
        tr = nt = 0
        for layer in self.layers:
            t, n = layer.count_params()
            rows.append((layer.kind, layer.output_shape, t + n))
            tr += t
            nt += n
        return ParamCount(rows, tr, nt)

    def summary(self) -> str:
        lines = [f"{self.name or 'network'}: input {self.input_shape}"]
        for i, (kind, shape, n) in enumerate(self.count_params().per_layer, 1):
            lines.append(f"{i:>3}  {kind:<14} {str(shape):<16} {n:>10}")
        pc = self.count_params()
        lines.append(f"total {pc.total} (trainable {pc.trainable})")
        return "\n".join(lines)


def count_params(network: Network) -> ParamCount:
    return network.count_params()


def forward(network: Network, x, mode: str = "infer"):
    return network.forward(x, mode)


def backward(network: Network, loss_grad):
    """Run back-propagation and return the per-parameter gradient arrays."""
    network.backward(loss_grad)
    return network.gradients()
