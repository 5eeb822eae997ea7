"""Synthetic beat corpora for running the pipeline without PhysioNet data."""
from __future__ import annotations

import numpy as np

from .preprocess import AFIB, NORMAL, BeatWindow, PanTompkinsConfig, preprocess_record
from .wfdb import Record, SyntheticEcgSpec, synthesize_ecg


def synthetic_records(n_records: int, seed: int = 0, duration: float = 120.0, fs: float = 250.0,
                      hr_range=(55.0, 95.0), rr_jitter: float = 0.3) -> list[Record]:
    """Records with one AFib episode covering a random 30-70% middle stretch."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_records):
        frac = rng.uniform(0.3, 0.7)
        start = rng.uniform(0.05, 0.95 - frac) * duration
        spec = SyntheticEcgSpec(
            heart_rate=float(rng.uniform(*hr_range)),
            duration=duration,
            sampling_rate=fs,
            afib_segments=[(start, start + frac * duration)],
            rr_jitter=rr_jitter,
            rng_seed=int(rng.integers(2**31)),
            amplitude_jitter=0.1,
        )
        rec = synthesize_ecg(spec)
        rec.header.record_name = f"synth{seed:04d}_{i:04d}"
        for sig in rec.header.signals:
            sig.file_name = rec.header.record_name + ".dat"
        out.append(rec)
    return out


def synthetic_windows(per_class: int, seed: int = 0, config: PanTompkinsConfig | None = None,
                      use_annotations: bool = False, duration: float = 120.0) -> list[BeatWindow]:
    """Generate records until both classes have at least ``per_class`` windows."""
    windows: list[BeatWindow] = []
    counts = {AFIB: 0, NORMAL: 0}
    batch = 0
    while min(counts.values()) < per_class:
        for rec in synthetic_records(4, seed=seed * 1000 + batch, duration=duration):
            for w in preprocess_record(rec, config, use_annotations):
                windows.append(w)
                counts[w.label] += 1
        batch += 1
    return windows
