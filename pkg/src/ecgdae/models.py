"""The three denoising autoencoders and three beat classifiers."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ShapeError, SpecError
from .nn import (
    LSTM, BatchNorm, Bidirectional, Conv1D, Deconv1D, Dense, Dropout, Flatten, MaxPool1D, Network,
    RepeatVector, Reshape, TrainConfig,
)
from .nn.losses import renormalized
from .preprocess import CLASSES, WINDOW_LENGTH

LEAKY = {"name": "leaky_relu", "alpha": 0.3}


@dataclass
class ArchitectureSpec:
    name: str
    input_shape: tuple
    layers: Callable[..., list]
    train_config: TrainConfig
    kind: str  # "dae" or "clf"
    notes: str = ""


def _dae_cnn(filters=(16, 32)):
    f1, f2 = filters
    return [
        Conv1D(f1, 3, padding="same", activation=LEAKY),
        MaxPool1D(2, 2, padding="same"),
        Conv1D(f2, 3, padding="same", activation=LEAKY),
        MaxPool1D(2, 2, padding="same"),
        Deconv1D(f2, 3, strides=2, padding="same", activation=LEAKY),
        Deconv1D(f1, 3, strides=2, padding="same", activation=LEAKY),
        Conv1D(1, 3, padding="same"),
    ]


def _dae_dnn(encoder=(256, 128, 64), decoder=(128, 256)):
    layers = [Dense(u, "relu") for u in encoder + decoder]
    layers.append(Dense(WINDOW_LENGTH, "scaled_sigmoid"))
    return layers


def _dae_lstm(encoder=(64, 32), decoder=32):
    return [
        LSTM(encoder[0], return_sequences=True),
        LSTM(encoder[1]),
        RepeatVector(WINDOW_LENGTH),
        LSTM(decoder, return_sequences=True),
        Dense(1),
    ]


def _clf_dnn(dropout=0.3, widths=(1024, 1024, 512, 128, 64)):
    w = widths
    return [
        Dense(w[0], "relu"), Dropout(dropout),
        Dense(w[1], "relu"), Dropout(dropout),
        Dense(w[2], "relu"),
        Dense(w[3], "relu"),
        Dense(w[4], "relu"),
        Dense(2, "sigmoid"),
    ]


def _clf_cnn(dropout=0.3, filters=64, dense=(128, 32)):
    return [
        Conv1D(filters, 5, activation="relu"), BatchNorm(), MaxPool1D(2, 2, padding="same"),
        Conv1D(filters, 3, activation="relu"), BatchNorm(), MaxPool1D(2, 2, padding="same"),
        Conv1D(filters, 3, activation="relu"), BatchNorm(), MaxPool1D(2, 2, padding="same"),
        Flatten(),
        Dropout(dropout),
        Dense(dense[0], "relu"),
        Dense(dense[1], "relu"),
        Dense(2, "sigmoid"),
    ]


def _clf_rnn(dropout=0.2, units=32, dense=64):
    return [
        Reshape((WINDOW_LENGTH, 1)),
        Bidirectional(units, return_sequences=True, dual_bias=True),
        Bidirectional(units, dual_bias=True),
        Dropout(dropout),
        Dense(dense, "relu"),
        Dense(2, "sigmoid"),
    ]


SPECS = {
    "DAE-CNN": ArchitectureSpec(
        "DAE-CNN", (WINDOW_LENGTH, 1), _dae_cnn,
        TrainConfig(lr=1e-5, batch_size=32, max_epochs=100, patience=5, loss="mse"), "dae",
        "conv k3 same (16, 32 filters) + maxpool/2 twice, mirrored stride-2 deconvs, linear conv output; leaky slope 0.3",
    ),
    "DAE-DNN": ArchitectureSpec(
        "DAE-DNN", (WINDOW_LENGTH,), _dae_dnn,
        TrainConfig(lr=1e-5, batch_size=32, max_epochs=100, patience=5, loss="mse"), "dae",
        "dense 256-128-64 encoder, 128-256 decoder, 300-unit output with sigmoid stretched to (-1, 1)",
    ),
    "DAE-LSTM": ArchitectureSpec(
        "DAE-LSTM", (WINDOW_LENGTH, 1), _dae_lstm,
        TrainConfig(lr=1e-3, batch_size=32, max_epochs=100, patience=5, loss="mse"), "dae",
        "LSTM(64, sequences) -> LSTM(32) -> repeat x300 -> LSTM(32, sequences) -> per-step Dense(1)",
    ),
    "CLF-DNN": ArchitectureSpec(
        "CLF-DNN", (WINDOW_LENGTH,), _clf_dnn,
        TrainConfig(lr=1e-3, batch_size=64, max_epochs=50, loss="cce"), "clf",
        "dense 1024-1024-512-128-64 with dropout 0.3 after the first two, 2 sigmoid outputs",
    ),
    "CLF-CNN": ArchitectureSpec(
        "CLF-CNN", (WINDOW_LENGTH, 1), _clf_cnn,
        TrainConfig(lr=1e-3, batch_size=128, max_epochs=16, loss="cce"), "clf",
        "3x [conv(64; k5 then k3) relu, batchnorm, maxpool/2 same], flatten, dropout 0.3, dense 128-32, 2 sigmoid",
    ),
    "CLF-RNN": ArchitectureSpec(
        "CLF-RNN", (WINDOW_LENGTH,), _clf_rnn,
        TrainConfig(lr=1e-3, batch_size=64, max_epochs=50, loss="cce"), "clf",
        "two bidirectional LSTM(32/direction, separate input and recurrent biases), dropout 0.2, dense 64, 2 sigmoid",
    ),
}
DAE_NAMES = ("DAE-CNN", "DAE-DNN", "DAE-LSTM")
CLF_NAMES = ("CLF-DNN", "CLF-CNN", "CLF-RNN")


def get_spec(name: str) -> ArchitectureSpec:
    try:
        return SPECS[name]
    except KeyError:
        raise SpecError(f"unknown architecture {name!r}; choose from {sorted(SPECS)}") from None


def build(name: str, seed: int = 0, zero_final: bool = False, dtype=np.float32,
          train_config: Optional[TrainConfig] = None, **layer_kwargs) -> Network:
    """Instantiate a named architecture with its default training config.

    ``layer_kwargs`` override the builder's free hyperparameters (e.g.
    ``dropout`` for the classifiers).  ``zero_final`` zeroes the last
    parameterized layer, which makes a DAE output exactly zero.
    """
    spec = get_spec(name)
    tc = train_config or replace(spec.train_config, seed=seed)
    net = Network(spec.layers(**layer_kwargs), spec.input_shape, name=name, dtype=dtype, seed=seed,
                  train_config=tc, metadata={"kind": spec.kind, "hyperparameters": layer_kwargs})
    if zero_final:
        for layer in reversed(net.layers):
            if layer.params:
                for p in layer.params.values():
                    p[...] = 0
                break
    return net


def architecture_manifest(name: str) -> dict:
    spec = get_spec(name)
    net = build(name)
    pc = net.count_params()
    return {
        "name": name,
        "kind": spec.kind,
        "input_shape": list(spec.input_shape),
        "notes": spec.notes,
        "train_config": spec.train_config.to_dict(),
        "layers": [
            {"kind": l.kind, "config": l.config(), "output_shape": list(l.output_shape), "params": n}
            for l, (_, _, n) in zip(net.layers, pc.per_layer)
        ],
        "total_params": pc.total,
        "trainable_params": pc.trainable,
    }


def _as_batch(network: Network, windows) -> tuple[np.ndarray, tuple]:
    if isinstance(windows, (list, tuple)) and windows and hasattr(windows[0], "samples"):
        windows = np.stack([w.samples for w in windows])
    x = np.asarray(windows, dtype=np.float64)
    orig = x.shape
    if x.ndim == 3 and x.shape[-1] == 1:
        x = x[..., 0]
    if x.ndim != 2 or x.shape[1] != WINDOW_LENGTH:
        raise ShapeError(f"expected a batch of {WINDOW_LENGTH}-sample windows, got shape {orig}")
    return x.reshape((len(x),) + network.input_shape), orig


def denoise(dae: Network, noisy, batch_size: int = 256) -> np.ndarray:
    """Clean estimate with the same shape as ``noisy``."""
    x, orig = _as_batch(dae, noisy)
    out = dae.predict(x, batch_size)
    return out.reshape(orig).astype(np.float64)


class Classification(NamedTuple):
    probabilities: np.ndarray  # (n, 2), rows sum to 1
    labels: np.ndarray  # argmax index into CLASSES

    def names(self):
        return [CLASSES[i] for i in self.labels]


def classify(clf: Network, windows, batch_size: int = 256) -> Classification:
    x, _ = _as_batch(clf, windows)
    raw = clf.predict(x, batch_size).astype(np.float64)
    probs = renormalized(raw)
    return Classification(probs, probs.argmax(axis=1))
