"""Denoising quality and classification metrics."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ShapeError, ZeroPowerError
from .preprocess import AFIB, CLASSES

INF = math.inf


def _arr(x):
    return np.asarray(x, dtype=np.float64).ravel()


def mse(x, z) -> float:
    x, z = _arr(x), _arr(z)
    if x.shape != z.shape:
        raise ShapeError(f"length mismatch: {len(x)} vs {len(z)}")
    d = x - z
    return float(np.mean(d * d))


def psnr(x, z) -> float:
    """``10 log10(max|x|^2 / mse)``; +inf when the reconstruction is exact."""
    m = mse(x, z)
    if m == 0:
        return INF
    return float(10.0 * np.log10(np.max(np.abs(_arr(x))) ** 2 / m))


def prd(x, z) -> float:
    x, z = _arr(x), _arr(z)
    e = float(np.sum(x * x))
    if e == 0:
        raise ZeroPowerError("PRD undefined for an all-zero reference")
    d = x - z
    return float(100.0 * np.sqrt(np.sum(d * d) / e))


def snr_db(x, z) -> float:
    """Power-ratio SNR of ``x`` against the residual ``x - z``, in dB."""
    x, z = _arr(x), _arr(z)
    e = float(np.sum(x * x))
    if e == 0:
        raise ZeroPowerError("SNR undefined for an all-zero reference")
    d = x - z
    r = float(np.sum(d * d))
    if r == 0:
        return INF
    return float(10.0 * np.log10(e / r))


def snr_ratio(x, z) -> float:
    """Mean of the clean signal over the standard deviation of the residual."""
    x, z = _arr(x), _arr(z)
    sd = float(np.std(x - z))
    if sd == 0:
        return INF
    return float(np.mean(x) / sd)


@dataclass
class DenoiseMetrics:
    snr_paper: float
    snr_db: float
    snr_in_db: float
    snr_improvement: float
    mse: float
    psnr: float
    prd: float


def denoise_metrics(clean, noisy, denoised, valid_length: Optional[int] = None) -> DenoiseMetrics:
    """Metrics for one window, computed over its first ``valid_length`` samples."""
    x, xt, z = _arr(clean), _arr(noisy), _arr(denoised)
    if not (len(x) == len(xt) == len(z)):
        raise ShapeError("clean, noisy and denoised must have equal lengths")
    if valid_length is not None:
        x, xt, z = x[:valid_length], xt[:valid_length], z[:valid_length]
    if not np.any(x):
        raise ZeroPowerError("clean signal is all zeros")
    out_db = snr_db(x, z)
    in_db = snr_db(x, xt)
    if out_db == INF and in_db == INF:
        improvement = 0.0
    else:
        improvement = out_db - in_db
    return DenoiseMetrics(
        snr_paper=snr_ratio(x, z),
        snr_db=out_db,
        snr_in_db=in_db,
        snr_improvement=improvement,
        mse=mse(x, z),
        psnr=psnr(x, z),
        prd=prd(x, z),
    )


def denoise_metrics_batch(clean, noisy, denoised, valid_lengths=None) -> list[DenoiseMetrics]:
    clean, noisy, denoised = (np.asarray(a, dtype=np.float64).reshape(len(a), -1) for a in (clean, noisy, denoised))
    out = []
    for i in range(len(clean)):
        v = None if valid_lengths is None else int(valid_lengths[i])
        out.append(denoise_metrics(clean[i], noisy[i], denoised[i], v))
    return out


def summarize_denoise(rows: Sequence[DenoiseMetrics]) -> dict:
    """Mean, std and median per metric (infinite values excluded)."""
    out = {"n": len(rows)}
    for name in ("snr_improvement", "snr_db", "snr_in_db", "snr_paper", "mse", "psnr", "prd"):
        v = np.array([getattr(r, name) for r in rows], dtype=float)
        f = v[np.isfinite(v)]
        out[name] = {
            "mean": float(f.mean()) if len(f) else None,
            "std": float(f.std()) if len(f) else None,
            "median": float(np.median(f)) if len(f) else None,
            "n_infinite": int(len(v) - len(f)),
        }
    return out


# ---------------------------------------------------------------------------
# classification


@dataclass
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def as_array(self):
        """Rows are true (negative, positive), columns predicted."""
        return np.array([[self.tn, self.fp], [self.fn, self.tp]])


def _label_array(labels):
    a = np.asarray(labels)
    if a.dtype.kind in "USO":
        return a.astype(str)
    return np.array([CLASSES[int(i)] for i in a])


def confusion(labels, predictions, positive_class: str = AFIB) -> ConfusionMatrix:
    """Tally against ``positive_class``; labels may be class names or indices."""
    if len(labels) != len(predictions):
        raise ShapeError(f"{len(labels)} labels vs {len(predictions)} predictions")
    t = _label_array(labels) == positive_class
    p = _label_array(predictions) == positive_class
    return ConfusionMatrix(
        tp=int(np.sum(t & p)), tn=int(np.sum(~t & ~p)), fp=int(np.sum(~t & p)), fn=int(np.sum(t & ~p)),
    )


@dataclass
class ClassificationReport:
    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    specificity: Optional[float] = None
    false_positive_rate: Optional[float] = None
    undefined: dict[str, str] = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def classification_report(cm: ConfusionMatrix) -> ClassificationReport:
    """Accuracy, precision, recall and F1; a ratio with a zero denominator
    is reported as ``None`` with the reason recorded in ``undefined``."""
    undefined = {}

    def ratio(name, num, den, why):
        if den == 0:
            undefined[name] = why
            return None
        return num / den

    acc = ratio("accuracy", cm.tp + cm.tn, cm.total, "no evaluated windows")
    prec = ratio("precision", cm.tp, cm.tp + cm.fp, "no positive predictions (tp + fp = 0)")
    rec = ratio("recall", cm.tp, cm.tp + cm.fn, "no positive labels (tp + fn = 0)")
    spec = ratio("specificity", cm.tn, cm.tn + cm.fp, "no negative labels (tn + fp = 0)")
    fpr = ratio("false_positive_rate", cm.fp, cm.tn + cm.fp, "no negative labels (tn + fp = 0)")
    if prec is None or rec is None:
        f1 = None
        undefined["f1"] = "precision or recall undefined"
    elif prec + rec == 0:
        f1 = None
        undefined["f1"] = "precision + recall = 0"
    else:
        f1 = 2 * (rec * prec) / (rec + prec)
    return ClassificationReport(acc, prec, rec, f1, spec, fpr, undefined)


# ---------------------------------------------------------------------------
# report files


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, os.PathLike):
        return os.fspath(obj)
    return obj


def report_json(report) -> str:
    """Full-precision JSON; infinities are written as ``Infinity``."""
    return json.dumps(_jsonable(report), indent=2, sort_keys=True)


def report_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    keys = list(rows[0])
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def long_format_csv(per_window: dict[str, Sequence[DenoiseMetrics]],
                    metrics=("snr_improvement", "psnr", "prd", "mse")) -> str:
    """``model, window_id, metric, value`` rows for violin/box plots."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "window_id", "metric", "value"])
    for model, rows in per_window.items():
        for i, r in enumerate(rows):
            for m in metrics:
                w.writerow([model, i, m, repr(float(getattr(r, m)))])
    return buf.getvalue()
