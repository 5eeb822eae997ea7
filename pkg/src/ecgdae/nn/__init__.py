"""A small reverse-mode training engine on numpy arrays."""
from .layers import (
    LSTM, ActivationLayer, BatchNorm, Bidirectional, Conv1D, Deconv1D, Dense, Dropout, Flatten,
    Layer, MaxPool1D, RepeatVector, Reshape,
)
from .network import Network, NonFiniteError, ParamCount, backward, count_params, forward
from .optim import Adam, AdamConfig, AdamState, adam_step
from .serialize import deserialize, load, save, serialize
from .train import TrainConfig, history_csv, train

__all__ = [
    "LSTM", "ActivationLayer", "BatchNorm", "Bidirectional", "Conv1D", "Deconv1D", "Dense", "Dropout",
    "Flatten", "Layer", "MaxPool1D", "RepeatVector", "Reshape", "Network", "NonFiniteError", "ParamCount",
    "backward", "count_params", "forward", "Adam", "AdamConfig", "AdamState", "adam_step", "deserialize",
    "load", "save", "serialize", "TrainConfig", "history_csv", "train",
]
