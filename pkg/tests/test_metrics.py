import json
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ecgdae.errors import ShapeError, ZeroPowerError
from ecgdae.metrics import (
    ConfusionMatrix, classification_report, confusion, denoise_metrics, long_format_csv, mse, prd, psnr,
    report_json, snr_db,
)

vals = st.floats(-10, 10, allow_nan=False)


def test_perfect_reconstruction():
    x = np.array([0.5, -1.0, 0.25])
    m = denoise_metrics(x, x + 0.1, x)
    assert m.mse == 0 and m.prd == 0 and m.psnr == math.inf


def test_psnr_closed_form():
    x = np.array([1.0, -0.5, 0.0, 0.2])
    z = x + np.array([0.1, -0.1, 0.1, -0.1])
    assert mse(x, z) == pytest.approx(0.01)
    assert psnr(x, z) == pytest.approx(20.0)


def test_hand_computed_prd():
    assert mse([1, 1, 1, 1], [1, 1, 1, 0]) == 0.25
    assert prd([1, 1, 1, 1], [1, 1, 1, 0]) == 50.0


@given(arrays(np.float64, 16, elements=vals), arrays(np.float64, 16, elements=vals), st.floats(1e-3, 1e3))
def test_prd_scale_invariance(x, z, c):
    assume(np.sum(x * x) > 1e-6)
    assert prd(c * x, c * z) == pytest.approx(prd(x, z), rel=1e-12, abs=1e-12)


@given(arrays(np.float64, 10, elements=vals), arrays(np.float64, 10, elements=vals))
def test_mse_symmetric_and_zero_on_self(x, z):
    assert mse(x, x) == 0 and mse(x, z) == mse(z, x)


@given(arrays(np.float64, 10, elements=vals), arrays(np.float64, 10, elements=vals))
def test_noisy_passthrough_improves_nothing(x, noise):
    assume(np.sum(x * x) > 1e-6)
    assert denoise_metrics(x, x + noise, x + noise).snr_improvement == 0.0


def test_valid_length_restricts_metrics():
    x = np.r_[np.ones(4), np.zeros(4)]
    z = np.r_[np.ones(4), np.full(4, 9.0)]
    assert denoise_metrics(x, z, z, valid_length=4).mse == 0


def test_zero_reference():
    with pytest.raises(ZeroPowerError):
        prd(np.zeros(3), np.ones(3))
    with pytest.raises(ZeroPowerError):
        snr_db(np.zeros(3), np.ones(3))


# -- classification -----------------------------------------------------------

def test_all_correct():
    labels = ["AFib"] * 10 + ["Normal"] * 10
    assert confusion(labels, labels) == ConfusionMatrix(tp=10, tn=10, fp=0, fn=0)


def test_inverted_predictions_swap_cells():
    r = np.random.default_rng(0)
    y, p = r.integers(0, 2, 50), r.integers(0, 2, 50)
    a, b = confusion(y, p), confusion(y, 1 - p)
    assert (a.tp, a.tn, a.fp, a.fn) == (b.fn, b.fp, b.tn, b.tp)


def test_vectorized_tally_matches_loop():
    r = np.random.default_rng(7)
    y, p = r.integers(0, 2, 1000), r.integers(0, 2, 1000)
    cm = {"tp": 0, "tn": 0, "fp": 0, "fn": 0}
    for t, q in zip(y, p):
        key = ("t" if t == q else "f") + ("p" if q == 1 else "n")
        cm[key] += 1
    assert confusion(y, p) == ConfusionMatrix(**cm)


def test_report_99():
    rep = classification_report(ConfusionMatrix(tp=99, tn=99, fp=1, fn=1))
    assert (rep.accuracy, rep.precision, rep.recall, rep.f1) == pytest.approx((0.99,) * 4)


def test_cnn_row_reproduced_from_counts():
    # 9,000 test beats with 36 false positives and 36 false negatives
    rep = classification_report(ConfusionMatrix(tp=7164, tn=1764, fp=36, fn=36))
    assert rep.precision == pytest.approx(0.995, abs=1e-12)
    assert rep.recall == pytest.approx(0.995, abs=1e-12)
    assert rep.accuracy == pytest.approx(0.992, abs=1e-12)


def test_undefined_precision_is_flagged():
    rep = classification_report(ConfusionMatrix(tp=0, tn=5, fp=0, fn=3))
    assert rep.precision is None and "precision" in rep.undefined
    assert rep.recall == 0


def test_all_normal_record_has_fpr_without_recall():
    rep = classification_report(confusion(["Normal"] * 100, ["Normal"] * 98 + ["AFib"] * 2))
    assert rep.false_positive_rate == 0.02
    assert rep.recall is None and "recall" in rep.undefined


@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
def test_report_identities(tp, tn, fp, fn):
    cm = ConfusionMatrix(tp, tn, fp, fn)
    assert cm.as_array().sum() == cm.total
    rep = classification_report(cm)
    if cm.total:
        assert round(rep.accuracy * cm.total) == tp + tn
    if rep.f1 is not None:
        assert min(rep.precision, rep.recall) - 1e-12 <= rep.f1 <= max(rep.precision, rep.recall) + 1e-12


def test_length_mismatch():
    with pytest.raises(ShapeError):
        confusion([0, 1], [0])


def test_report_files():
    x = np.array([1.0, 0.5, -0.5])
    m = denoise_metrics(x, x + 0.2, x)
    assert json.loads(report_json({"m": m}))["m"]["psnr"] == math.inf
    lines = long_format_csv({"DAE-CNN": [m]}, metrics=("prd", "mse")).splitlines()
    assert lines == ["model,window_id,metric,value", "DAE-CNN,0,prd,0.0", "DAE-CNN,0,mse,0.0"]
