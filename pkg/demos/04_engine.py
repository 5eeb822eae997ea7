"""The training engine underneath every model.

Layers are plain numpy with hand-written backward passes.  This checks
a few of them against central differences, prints the classifier
parameter tables and fits a tiny network.
"""
import numpy as np

from ecgdae.models import build
from ecgdae.nn import (
    LSTM,
    Conv1D,
    Dense,
    Flatten,
    MaxPool1D,
    Network,
    TrainConfig,
    train,
)
from ecgdae.nn.gradcheck import check_network

rng = np.random.default_rng(0)
for name, layers, shape in [
    ("conv + pool + dense", [Conv1D(4, 3, activation="tanh"), MaxPool1D(2), Flatten(), Dense(2, "sigmoid")], (12, 2)),
    ("lstm", [LSTM(5, return_sequences=False), Dense(1)], (6, 3)),
]:
    net = Network(layers, shape, dtype=np.float64, seed=1)
    errs = check_network(net, rng.standard_normal((3,) + shape))
    print(f"gradient check, {name}: worst relative error {max(errs.values()):.1e}")

for arch in ("CLF-DNN", "CLF-CNN"):
    print(f"\n{arch}")
    for layer, shape, n in build(arch).count_params().per_layer:
        print(f"  {layer:28s} {str(shape):12s} {n}")

# XOR-like toy problem: two blobs per class
x = rng.standard_normal((400, 2))
y = np.eye(2)[(x[:, 0] * x[:, 1] > 0).astype(int)]
net = Network([Dense(16, "tanh"), Dense(2, "softmax")], (2,), seed=0)
_, history = train(net, (x[:300], y[:300]), (x[300:], y[300:]), TrainConfig(lr=1e-2, max_epochs=60, loss="cce", monitor="val_accuracy"))
print(f"\ntoy classifier: val accuracy {history[-1]['val_metric']:.2f} after {len(history)} epochs")
