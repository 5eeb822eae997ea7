"""Corrupt one beat at a chosen SNR with each noise kind.

The noise is scaled so that the power ratio over the beat's valid samples
hits the target exactly; the padded tail stays zero.  Without the NSTDB
on disk the baseline wander, electrode motion and muscle artifact sources
are synthetic stand-ins with roughly matching spectra.
"""
import numpy as np

from ecgdae.datasets import synthetic_windows
from ecgdae.noise import (
    NoiseSource,
    corrupt,
    equal_mixture,
    measured_snr,
    synthetic_noise_record,
)

beat = synthetic_windows(5, seed=1)[0]
sources = {"awgn": NoiseSource("awgn")}
for kind in ("bw", "em", "ma"):
    sources[kind] = synthetic_noise_record(kind, seed=7)
sources["mixture"] = equal_mixture({k: sources[k] for k in ("bw", "em", "ma")}, seed=7)

print(f"{'kind':8s} " + " ".join(f"{s:>8}" for s in ("-10 dB", "-5 dB", "0 dB", "5 dB")))
for kind, src in sources.items():
    got = []
    for snr in (-10, -5, 0, 5):
        noisy, noise = corrupt(beat.samples, src, snr, beat.valid_length, seed=11)
        assert not np.any(noisy[beat.valid_length:])
        got.append(measured_snr(beat.samples, noise, beat.valid_length))
    print(f"{kind:8s} " + " ".join(f"{g:8.3f}" for g in got))
