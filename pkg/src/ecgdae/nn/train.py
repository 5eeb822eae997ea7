from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..errors import DivergenceFault
from . import losses
from .network import Network, NonFiniteError
from .optim import Adam, AdamConfig

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 10
    patience: Optional[int] = None  # None disables early stopping
    monitor: str = "val_loss"
    loss: str = "mse"  # "mse" or "cce"
    seed: int = 0
    restore_best: bool = True

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience is not None and self.patience < 0:
            raise ValueError("patience must be >= 0")
        if self.loss not in losses.LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(self.lr, self.beta1, self.beta2, self.eps)

    def to_dict(self):
        return asdict(self)


def _targets(y, loss, n_out):
    y = np.asarray(y)
    if loss == "cce" and y.ndim == 1:
        return np.eye(n_out)[y]
    return y


def evaluate_loss(network: Network, x, y, config: TrainConfig, batch_size: int = 512):
    pred = network.predict(x, batch_size)
    target = _targets(y, config.loss, pred.shape[-1]).astype(pred.dtype)
    value, _ = losses.LOSSES[config.loss](pred, target)
    metric = value
    if config.loss == "cce":
        metric = float(np.mean(pred.argmax(-1) == target.argmax(-1)))
    return value, metric


def train(network: Network, train_set, val_set, config: TrainConfig, verbose: bool = False):
    """Mini-batch Adam with optional early stopping on validation loss.

    Returns ``(network, history)``; ``history`` is a list of per-epoch dicts
    with ``epoch, train_loss, val_loss, val_metric``.
    """
    x, y = train_set
    xv, yv = val_set
    if len(x) == 0 or len(xv) == 0:
        raise ValueError("training and validation sets must be non-empty")
    n_out = network.output_shape[-1]
    y = _targets(y, config.loss, n_out).astype(network.dtype)
    x = np.asarray(x, dtype=network.dtype)
    if len(y) != len(x):
        raise ValueError("inputs and targets differ in length")
    loss_fn = losses.LOSSES[config.loss]

    rng = np.random.default_rng(config.seed)
    network.reset_rng(config.seed)
    opt = Adam(network.parameters(), config.adam)
    grads = network.gradients()
    history = []
    best = np.inf
    best_weights = network.get_weights()
    wait = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(x))
        total = 0.0
        for bi, start in enumerate(range(0, len(x), config.batch_size)):
            idx = order[start : start + config.batch_size]
            try:
                pred = network.forward(x[idx], "train")
                value, g = loss_fn(pred, y[idx])
                if not np.isfinite(value):
                    raise DivergenceFault(epoch, bi)
                network.backward(g)
            except NonFiniteError as exc:
                raise DivergenceFault(epoch, bi, str(exc)) from exc
            opt.step(grads)
            total += value * len(idx)
        try:
            val_loss, val_metric = evaluate_loss(network, xv, yv, config)
        except NonFiniteError as exc:
            raise DivergenceFault(epoch, -1, str(exc)) from exc
        if not np.isfinite(val_loss):
            raise DivergenceFault(epoch, -1, "non-finite validation loss")
        row = {"epoch": epoch, "train_loss": total / len(x), "val_loss": val_loss, "val_metric": val_metric}
        history.append(row)
        if verbose:
            log.info("epoch %d train %.5f val %.5f metric %.4f", epoch, row["train_loss"], val_loss, val_metric)
        if val_loss < best:
            best = val_loss
            best_weights = network.get_weights()
            wait = 0
        else:
            wait += 1
            if config.patience is not None and wait > config.patience:
                break
    if config.restore_best and config.patience is not None:
        network.set_weights(best_weights)
    return network, history


def history_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_loss", "val_metric"])
    for row in history:
        w.writerow([row["epoch"], repr(row["train_loss"]), repr(row["val_loss"]), repr(row["val_metric"])])
    return buf.getvalue()
