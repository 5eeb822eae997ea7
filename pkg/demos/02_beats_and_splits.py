"""From records to beat windows.

Pan-Tompkins finds the R peaks, each beat becomes a 1.2 s window that
starts at its R peak (the RR interval is kept and the rest zero padded),
and windows are pooled into class-balanced train/test/validation splits.
"""
import tempfile

import numpy as np

from ecgdae.datasets import synthetic_records
from ecgdae.preprocess import (
    assemble_dataset,
    detect_r_peaks,
    load_split,
    preprocess_record,
    save_split,
)

records = synthetic_records(12, seed=4, duration=120)

rec = records[0]
peaks = detect_r_peaks(rec)
truth = rec.beat_indices()
err = [int(np.min(np.abs(truth - p))) for p in peaks]
print(f"{rec.header.record_name}: {len(peaks)} peaks found for {len(truth)} annotated beats, "
      f"worst offset {max(err)} samples")

windows = [w for r in records for w in preprocess_record(r)]
labels, counts = np.unique([w.label for w in windows], return_counts=True)
print("windows per class:", dict(zip(labels.tolist(), counts.tolist())))
w = windows[0]
print(f"one window: {len(w.samples)} samples, {w.valid_length} from the beat, tail all zero:",
      not np.any(w.samples[w.valid_length:]))

split = assemble_dataset(windows, per_class=400, seed=0)
print("split sizes:", split.counts())

with tempfile.TemporaryDirectory() as d:
    save_split(split, d)
    again, _, manifest = load_split(d)
    print("reloaded split sizes:", again.counts(), "train class counts:", manifest["splits"]["train"]["class_counts"])
