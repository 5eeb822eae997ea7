import json

import numpy as np
import pytest

from ecgdae.errors import ShapeError, SpecError
from ecgdae.models import (
    CLF_NAMES, DAE_NAMES, architecture_manifest, build, classify, denoise, get_spec,
)
from ecgdae.metrics import denoise_metrics_batch
from ecgdae.nn import Dense, Network, TrainConfig, train
from ecgdae.noise import NoiseSource, corrupt_batch
from ecgdae.preprocess import normalize, windows_to_arrays
from ecgdae.datasets import synthetic_windows

CLF_DNN_COUNTS = [308224, 1049600, 524800, 65664, 8256, 130]
CLF_CNN_COUNTS = [384, 256, 12352, 256, 12352, 256, 295040, 4128, 66]
CLF_CNN_SHAPES = [(296, 64), (148, 64), (146, 64), (73, 64), (71, 64), (36, 64), (2304,)]


def _counts(name):
    return [n for _, _, n in build(name).count_params().per_layer if n]


def test_clf_dnn_layer_counts():
    assert _counts("CLF-DNN") == CLF_DNN_COUNTS
    assert build("CLF-DNN").count_params().total == sum(CLF_DNN_COUNTS)


def test_clf_cnn_layer_counts_and_shapes():
    net = build("CLF-CNN")
    assert _counts("CLF-CNN") == CLF_CNN_COUNTS
    shapes = [l.output_shape for l in net.layers if l.kind in ("Conv1D", "MaxPool1D", "Flatten")]
    assert shapes == CLF_CNN_SHAPES


def test_clf_rnn_counts():
    # separate input and recurrent biases reproduce the bidirectional rows
    assert _counts("CLF-RNN") == [8960, 25088, 4160, 130]


@pytest.mark.parametrize("name", DAE_NAMES)
def test_dae_output_shape_equals_input(name):
    net = build(name)
    assert net.output_shape == net.input_shape
    x = np.random.default_rng(0).uniform(-1, 1, (3, 300))
    assert denoise(net, x).shape == (3, 300)
    assert denoise(net, x[..., None]).shape == (3, 300, 1)


@pytest.mark.parametrize("name", DAE_NAMES)
def test_zeroed_final_layer_outputs_zeros(name):
    net = build(name, zero_final=True)
    out = denoise(net, np.random.default_rng(1).uniform(-1, 1, (4, 300)))
    assert np.all(out == 0)


@pytest.mark.parametrize("name", CLF_NAMES)
def test_classifier_outputs(name):
    x = np.random.default_rng(2).uniform(-1, 1, (5, 300))
    res = classify(build(name, seed=3), x)
    assert res.probabilities.shape == (5, 2) and len(res.labels) == 5
    assert np.allclose(res.probabilities.sum(1), 1, atol=1e-6)


def test_argmax_maps_to_class_names():
    net = Network([Dense(2, "sigmoid")], (300,), dtype=np.float64)
    net.layers[0].params["W"][...] = 0
    net.layers[0].params["b"][...] = np.log([0.9 / 0.1, 0.1 / 0.9])
    res = classify(net, np.zeros((1, 300)))
    assert np.allclose(res.probabilities, [[0.9, 0.1]]) and res.names() == ["Normal"]


def test_positive_rescaling_then_renormalizing_keeps_prediction():
    net = build("CLF-DNN", seed=4)
    w = normalize(np.random.default_rng(5).standard_normal((6, 300)))
    scaled = np.stack([normalize(3.7 * row) for row in w])
    assert np.array_equal(classify(net, w).labels, classify(net, scaled).labels)


def test_bad_window_shape():
    with pytest.raises(ShapeError):
        classify(build("CLF-DNN"), np.zeros((2, 250)))


def test_unknown_architecture():
    with pytest.raises(SpecError):
        get_spec("DAE-GRU")


@pytest.mark.parametrize("name", DAE_NAMES + CLF_NAMES)
def test_manifest_is_json(name):
    m = json.loads(json.dumps(architecture_manifest(name)))
    assert m["name"] == name and m["total_params"] == build(name).count_params().total


def test_trained_dae_cnn_improves_snr():
    ws = synthetic_windows(300, seed=2, duration=60)
    x, _, valid = windows_to_arrays(ws[:700])
    tr, te = slice(0, 600), slice(600, 700)
    snr = np.r_[np.random.default_rng(3).choice([-10.0, -5.0, 0.0, 5.0], 600), np.full(100, -10.0)]
    noisy = corrupt_batch(x, NoiseSource("awgn"), snr, valid, seed=1)
    net = build("DAE-CNN", seed=0)
    cfg = TrainConfig(lr=1e-3, batch_size=32, max_epochs=4, seed=0)
    train(net, (noisy[tr, :, None], x[tr, :, None]), (noisy[te, :, None], x[te, :, None]), cfg)
    out = denoise(net, noisy[te])
    imp = [m.snr_improvement for m in denoise_metrics_batch(x[te], noisy[te], out, valid[te])]
    assert np.median(imp) > 0
    # a clean input should come back at least as close as a noisy one does
    clean_out = denoise(net, x[te])
    assert np.mean((clean_out - x[te]) ** 2) <= np.mean((out - x[te]) ** 2)
