"""Write a synthetic two-minute ECG as a WFDB record, read it back and
resample it.

The record is stored in format 212 with an MIT annotation file holding
beat labels and rhythm changes, the same layout the AFDB ships in.
"""
import tempfile

import numpy as np

from ecgdae.wfdb import (
    SyntheticEcgSpec,
    decode_212,
    encode_212,
    load_record,
    resample,
    save_record,
    synthesize_ecg,
)

spec = SyntheticEcgSpec(heart_rate=70, duration=120, afib_segments=[(40, 80)], rng_seed=3)
rec = synthesize_ecg(spec)
rec.header.record_name = "demo01"
for sig in rec.header.signals:
    sig.file_name = "demo01.dat"

with tempfile.TemporaryDirectory() as d:
    save_record(rec, d)
    back = load_record(f"{d}/demo01")
    print(f"saved and reloaded {back.n_samples} samples at {back.sampling_rate:g} Hz")
    print("digital samples identical:", np.array_equal(back.digital(), rec.digital()))

rhythm = [(a.sample_index, a.aux) for a in back.annotations if a.kind == "rhythm"]
beats = [a for a in back.annotations if a.kind == "beat"]
print(f"{len(beats)} beat labels; rhythm changes {rhythm}")

# two 12-bit samples share three bytes
print("212 packing of (-2048, 2047):", encode_212(np.array([-2048, 2047])).hex(),
      "->", decode_212(encode_212(np.array([-2048, 2047])), 2))

slow = resample(back, 128.0)
print(f"resampled to {slow.sampling_rate:g} Hz: {slow.n_samples} samples, "
      f"{sum(a.kind == 'beat' for a in slow.annotations)} beats kept")
