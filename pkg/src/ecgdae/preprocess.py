"""Beat-level preprocessing: normalization, QRS detection, segmentation and
dataset assembly."""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import signal as sps

from .errors import ClassShortage, InsufficientSignal, ParseError
from .wfdb import Record

TARGET_RATE = 250.0
WINDOW_SECONDS = 1.2
WINDOW_LENGTH = 300
AFIB, NORMAL = "AFib", "Normal"
CLASSES = (NORMAL, AFIB)  # index 0 = Normal, index 1 = AFib
SPLIT_NAMES = ("train", "test", "validation")


def normalize(x) -> np.ndarray:
    """Affine min-max map onto [-1, 1]; a constant input maps to zeros."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot normalize an empty signal")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    out = 2.0 * (x - lo) / (hi - lo) - 1.0
    # pin the endpoints against rounding
    out[x == lo] = -1.0
    out[x == hi] = 1.0
    return out


# ---------------------------------------------------------------------------
# Pan-Tompkins QRS detection


@dataclass
class PanTompkinsConfig:
    band: tuple[float, float] = (5.0, 15.0)
    filter_order: int = 2
    derivative_length: int = 5
    integration_window: float = 0.150
    refractory: float = 0.200
    t_wave_window: float = 0.360
    signal_coef: float = 0.125
    noise_coef: float = 0.125
    threshold_fraction: float = 0.25
    searchback_factor: float = 1.66
    refine_window: float = 0.040
    sampling_rate: float = TARGET_RATE
    channel: int = 0

    def __post_init__(self):
        if self.refractory < 0.2:
            raise ValueError("refractory period must be at least 0.2 s")
        if not 0.1 <= self.integration_window <= 0.2:
            raise ValueError("integration window must lie in [0.1, 0.2] s")
        if self.derivative_length != 5:
            raise ValueError("only the five-point derivative is implemented")


def _pan_tompkins_stages(x: np.ndarray, fs: float, cfg: PanTompkinsConfig):
    # cascaded low-pass then high-pass, run forward-backward so there is no delay to undo
    b_lo, a_lo = sps.butter(cfg.filter_order, cfg.band[1], btype="low", fs=fs)
    b_hi, a_hi = sps.butter(cfg.filter_order, cfg.band[0], btype="high", fs=fs)
    bp = sps.filtfilt(b_hi, a_hi, sps.filtfilt(b_lo, a_lo, x))
    # five-point derivative (1/8T)(-x[n-2] - 2x[n-1] + 2x[n+1] + x[n+2])
    d = np.convolve(bp, np.array([1, 2, 0, -2, -1]) * fs / 8.0, mode="same")
    sq = d * d
    w = max(1, int(round(cfg.integration_window * fs)))
    mwi = np.convolve(sq, np.ones(w) / w, mode="same")
    return bp, d, mwi


def detect_r_peaks(record: Record, config: Optional[PanTompkinsConfig] = None) -> np.ndarray:
    """Pan-Tompkins R-peak detection.

    Band-pass, differentiate, square and integrate, then walk the local
    maxima of the integrated signal with adaptive signal/noise levels,
    T-wave rejection and RR-based search-back.  Each accepted QRS is
    snapped to the raw-signal maximum within ``refine_window``.
    """
    cfg = config or PanTompkinsConfig()
    fs = record.sampling_rate
    if fs != cfg.sampling_rate:
        raise ValueError(f"record sampled at {fs} Hz; resample to {cfg.sampling_rate} Hz first")
    x = record.signals[cfg.channel]
    if len(x) < 2 * fs:
        raise InsufficientSignal(f"record has {len(x) / fs:.2f} s of signal, need at least 2 s")
    if np.ptp(x) == 0:
        return np.array([], dtype=np.int64)

    bp, deriv, mwi = _pan_tompkins_stages(x, fs, cfg)
    refractory = int(round(cfg.refractory * fs))
    t_win = int(round(cfg.t_wave_window * fs))
    slope_half = max(1, int(round(0.075 * fs)))

    peaks, _ = sps.find_peaks(mwi, distance=max(1, refractory // 2))
    if len(peaks) == 0:
        return np.array([], dtype=np.int64)

    init = mwi[: int(2 * fs)]
    spki = 0.25 * init.max()
    npki = 0.5 * init.mean()

    def thr1():
        return npki + cfg.threshold_fraction * (spki - npki)

    def slope(k):
        lo, hi = max(0, k - slope_half), min(len(deriv), k + slope_half)
        return np.abs(deriv[lo:hi]).max()

    qrs: list[int] = []
    qrs_slopes: list[float] = []
    rr_recent: list[int] = []
    skipped: list[int] = []  # candidates classified as noise since last QRS

    def accept(k, searchback=False):
        nonlocal spki
        coef = 0.25 if searchback else cfg.signal_coef
        spki = coef * mwi[k] + (1 - coef) * spki
        if qrs:
            rr_recent.append(k - qrs[-1])
            del rr_recent[:-8]
        qrs.append(k)
        qrs_slopes.append(slope(k))
        skipped.clear()

    for k in peaks:
        if qrs and k - qrs[-1] < refractory:
            continue
        # search-back when the RR gap has grown past the expected interval
        if qrs and rr_recent:
            rr_avg = np.mean(rr_recent)
            if k - qrs[-1] > cfg.searchback_factor * rr_avg:
                cands = [c for c in skipped if c - qrs[-1] >= refractory and mwi[c] > 0.5 * thr1()]
                if cands:
                    best = max(cands, key=lambda c: mwi[c])
                    accept(best, searchback=True)
                    if k - qrs[-1] < refractory:
                        continue
        peak = mwi[k]
        if peak > thr1():
            if qrs and k - qrs[-1] < t_win and slope(k) < 0.5 * qrs_slopes[-1]:
                npki = cfg.noise_coef * peak + (1 - cfg.noise_coef) * npki
                skipped.append(k)
                continue
            accept(k)
        else:
            npki = cfg.noise_coef * peak + (1 - cfg.noise_coef) * npki
            skipped.append(k)

    # snap onto the band-passed then raw maximum
    wide = int(round(0.075 * fs))
    narrow = max(1, int(round(cfg.refine_window * fs)))
    out = []
    for k in qrs:
        lo, hi = max(0, k - wide), min(len(x), k + wide + 1)
        c = lo + int(np.argmax(bp[lo:hi]))
        lo, hi = max(0, c - narrow), min(len(x), c + narrow + 1)
        r = lo + int(np.argmax(x[lo:hi]))
        if out and r - out[-1] < refractory:
            if x[r] > x[out[-1]]:
                out[-1] = r
            continue
        out.append(r)
    return np.asarray(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# segmentation


@dataclass
class BeatWindow:
    samples: np.ndarray
    label: str
    source: tuple[str, int]
    valid_length: int

    @property
    def label_index(self) -> int:
        return CLASSES.index(self.label)


def _afib_mask(record: Record, peaks: np.ndarray) -> np.ndarray:
    mask = np.zeros(len(peaks), dtype=bool)
    for a, b in record.afib_intervals():
        mask |= (peaks >= a) & (peaks < b)
    return mask


def segment_beats(record: Record, r_peaks: Sequence[int], channel: int = 0,
                  window_length: int = WINDOW_LENGTH) -> list[BeatWindow]:
    """One window per R peak running up to the next R peak (capped at the
    window length), normalized and zero padded.  Windows that would run off
    the end of the record are dropped."""
    peaks = np.asarray(r_peaks, dtype=np.int64)
    if np.any(np.diff(peaks) < 0):
        raise ValueError("r_peaks must be sorted")
    x = record.signals[channel]
    n = len(x)
    afib = _afib_mask(record, peaks)
    name = record.header.record_name
    out = []
    for i, p in enumerate(peaks):
        span = window_length if i + 1 == len(peaks) else min(int(peaks[i + 1] - p), window_length)
        if p + span > n or span <= 0:
            continue
        w = np.zeros(window_length)
        w[:span] = normalize(x[p : p + span])
        out.append(BeatWindow(w, AFIB if afib[i] else NORMAL, (name, int(p)), span))
    return out


def preprocess_record(record: Record, config: Optional[PanTompkinsConfig] = None,
                      use_annotations: bool = False) -> list[BeatWindow]:
    """Resample, normalize, detect and segment one record."""
    from .wfdb import resample

    cfg = config or PanTompkinsConfig()
    rec = resample(record, cfg.sampling_rate)
    rec.signals = np.vstack([normalize(ch) for ch in rec.signals])
    if use_annotations:
        peaks = rec.beat_indices()
    else:
        peaks = detect_r_peaks(rec, cfg)
    return segment_beats(rec, peaks, channel=cfg.channel)


# ---------------------------------------------------------------------------
# dataset assembly


@dataclass
class DatasetSplit:
    train: list[BeatWindow]
    test: list[BeatWindow]
    validation: list[BeatWindow]
    rng_seed: int
    per_class: dict[str, int] = field(default_factory=dict)

    def __getitem__(self, name: str) -> list[BeatWindow]:
        return getattr(self, name)

    def counts(self) -> dict[str, int]:
        return {s: len(self[s]) for s in SPLIT_NAMES}


SPLIT_PERCENT = (75, 15, 10)  # train, test, validation


def split_sizes(n: int, percent=SPLIT_PERCENT) -> tuple[int, int, int]:
    """Train and test sizes rounded down, validation takes the remainder."""
    n_train = n * percent[0] // 100
    n_test = n * percent[1] // 100
    return n_train, n_test, n - n_train - n_test


def assemble_dataset(windows: Sequence[BeatWindow], per_class: int, seed: int,
                     percent=SPLIT_PERCENT) -> DatasetSplit:
    rng = np.random.default_rng(seed)
    chosen = []
    for label in CLASSES:
        idx = [i for i, w in enumerate(windows) if w.label == label]
        if len(idx) < per_class:
            raise ClassShortage(label, len(idx), per_class)
        pick = rng.choice(len(idx), size=per_class, replace=False)
        chosen.extend(idx[j] for j in np.sort(pick))
    order = rng.permutation(len(chosen))
    pool = [windows[chosen[j]] for j in order]
    a, b, _ = split_sizes(len(pool), percent)
    return DatasetSplit(pool[:a], pool[a : a + b], pool[a + b :], seed, {c: per_class for c in CLASSES})


def windows_to_arrays(windows: Sequence[BeatWindow]):
    x = np.stack([w.samples for w in windows]).astype(np.float32) if windows else np.zeros((0, WINDOW_LENGTH), np.float32)
    y = np.array([w.label_index for w in windows], dtype=np.int64)
    valid = np.array([w.valid_length for w in windows], dtype=np.int64)
    return x, y, valid


# ---------------------------------------------------------------------------
# on-disk split directory

TENSOR_MAGIC = b"ECGT"


def tensor_bytes(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype="<f4")
    head = TENSOR_MAGIC + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return head + a.tobytes()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    if data[:4] != TENSOR_MAGIC or len(data) < 8:
        raise ParseError("not a tensor file")
    (ndim,) = struct.unpack_from("<I", data, 4)
    shape = struct.unpack_from(f"<{ndim}I", data, 8)
    off = 8 + 4 * ndim
    n = int(np.prod(shape)) if ndim else 1
    if len(data) - off != 4 * n:
        raise ParseError(f"tensor payload is {len(data) - off} bytes, expected {4 * n}")
    return np.frombuffer(data[off:], dtype="<f4").reshape(shape).copy()


def atomic_write(path: str, data: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_split(split: DatasetSplit, directory, noisy: Optional[dict] = None,
               extra: Optional[dict] = None) -> str:
    """Write one float32 tensor file per split plus ``manifest.json``.

    ``noisy`` optionally maps split names to corrupted copies of the
    windows, written alongside as ``<split>_noisy.bin``.
    """
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "format": "ecgdae-split/1",
        "rng_seed": split.rng_seed,
        "per_class": split.per_class,
        "window_length": WINDOW_LENGTH,
        "classes": list(CLASSES),
        "splits": {},
    }
    records = set()
    for name in SPLIT_NAMES:
        ws = split[name]
        x, y, valid = windows_to_arrays(ws)
        atomic_write(os.path.join(directory, f"{name}.bin"), tensor_bytes(x))
        entry = {
            "file": f"{name}.bin",
            "count": len(ws),
            "class_counts": {c: int(np.sum(y == i)) for i, c in enumerate(CLASSES)},
            "labels": y.tolist(),
            "valid_lengths": valid.tolist(),
            "sources": [[w.source[0], int(w.source[1])] for w in ws],
        }
        if noisy is not None and name in noisy:
            atomic_write(os.path.join(directory, f"{name}_noisy.bin"), tensor_bytes(noisy[name]))
            entry["noisy_file"] = f"{name}_noisy.bin"
        manifest["splits"][name] = entry
        records.update(w.source[0] for w in ws)
    manifest["source_records"] = sorted(records)
    manifest.update(extra or {})
    atomic_write(os.path.join(directory, "manifest.json"),
                 json.dumps(manifest, indent=1, sort_keys=True).encode())
    return directory


def load_split(directory):
    """Read a split directory back; returns ``(DatasetSplit, noisy, manifest)``."""
    directory = os.fspath(directory)
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    parts = {}
    noisy = {}
    for name in SPLIT_NAMES:
        entry = manifest["splits"][name]
        with open(os.path.join(directory, entry["file"]), "rb") as fh:
            x = tensor_from_bytes(fh.read())
        parts[name] = [
            BeatWindow(x[i].astype(np.float64), CLASSES[lab], (src[0], src[1]), v)
            for i, (lab, src, v) in enumerate(zip(entry["labels"], entry["sources"], entry["valid_lengths"]))
        ]
        if "noisy_file" in entry:
            with open(os.path.join(directory, entry["noisy_file"]), "rb") as fh:
                noisy[name] = tensor_from_bytes(fh.read())
    split = DatasetSplit(parts["train"], parts["test"], parts["validation"],
                         manifest["rng_seed"], manifest["per_class"])
    return split, noisy, manifest


def iter_windows(records: Iterable[Record], config: Optional[PanTompkinsConfig] = None,
                 use_annotations: bool = False):
    for rec in records:
        yield from preprocess_record(rec, config, use_annotations)
