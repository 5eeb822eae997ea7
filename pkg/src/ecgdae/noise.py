"""SNR-calibrated corruption of ECG windows.

Noise comes either from white Gaussian noise or from real noise records
(baseline wander ``bw``, electrode motion ``em``, muscle artifact ``ma``),
optionally mixed in fixed power proportions.  The amount of noise is always
set from the clean signal's power over its valid (unpadded) prefix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import signal as sps

from .errors import LengthError, ZeroPowerError

KINDS = ("awgn", "bw", "em", "ma", "mixture")
REAL_KINDS = ("bw", "em", "ma")


@dataclass
class NoiseSource:
    kind: str
    samples: Optional[np.ndarray] = None
    weights: dict[str, float] = field(default_factory=dict)
    components: dict[str, "NoiseSource"] = field(default_factory=dict)
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind in REAL_KINDS:
            if self.samples is None or len(self.samples) == 0:
                raise ValueError(f"{self.kind} noise needs a non-empty sample array")
            self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.kind == "mixture":
            w = np.array(list(self.weights.values()), dtype=float)
            if len(w) == 0 or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
                raise ValueError("mixture weights must be non-negative and sum to 1")
            missing = set(self.weights) - set(self.components)
            if missing:
                raise ValueError(f"mixture weights name unknown components {sorted(missing)}")


@dataclass(frozen=True)
class SnrTarget:
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("SNR target must be finite")


def gaussian(n: int, seed: int) -> np.ndarray:
    """Standard normal samples from a Philox counter stream via Box-Muller.

    Pairs of uniforms (u1, u2) become ``sqrt(-2 ln u1) * (cos, sin)(2 pi u2)``,
    so the output depends only on the seed, not on numpy's normal sampler.
    """
    m = (n + 1) // 2
    u = np.random.Generator(np.random.Philox(seed)).random(2 * m)
    u1 = 1.0 - u[:m]  # (0, 1]
    u2 = u[m:]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * m)
    z[0::2] = r * np.cos(2 * np.pi * u2)
    z[1::2] = r * np.sin(2 * np.pi * u2)
    return z[:n]


def noise_excerpt(source: NoiseSource, length: int, seed: int) -> np.ndarray:
    """A ``length``-sample noise excerpt.

    AWGN is drawn fresh with unit variance.  Real records give a uniformly
    placed contiguous slice with its mean removed.  Mixtures return the
    weighted, mutually orthogonal component sum at unit power.
    """
    if source.kind == "awgn":
        return gaussian(length, seed)
    if source.kind == "mixture":
        comps = mixture_components(source, length, seed, power=1.0)
        return np.sum(list(comps.values()), axis=0)
    rec = source.samples
    if length > len(rec):
        raise LengthError(f"excerpt of {length} samples requested from a {len(rec)}-sample record")
    rng = np.random.default_rng(seed)
    start = int(rng.integers(0, len(rec) - length + 1))
    seg = rec[start : start + length].copy()
    return seg - seg.mean()


def mixture_components(source: NoiseSource, length: int, seed: int, power: float) -> dict[str, np.ndarray]:
    """Excerpts of each mixture component, Gram-Schmidt orthogonalized so
    their powers add, then scaled so component ``k`` carries
    ``weights[k] * power``."""
    seeds = np.random.SeedSequence(seed).spawn(len(source.weights))
    basis: list[np.ndarray] = []
    out = {}
    for (name, w), ss in zip(sorted(source.weights.items()), seeds):
        if w == 0:
            continue
        v = noise_excerpt(source.components[name], length, int(ss.generate_state(1)[0]))
        for b in basis:
            v = v - (v @ b) / (b @ b) * b
        p = np.mean(v * v)
        if p == 0:
            raise ZeroPowerError(f"component {name!r} has no power left after orthogonalization")
        basis.append(v)
        out[name] = v * np.sqrt(w * power / p)
    return out


def signal_power(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x))


def measured_snr(clean, noise, valid_length: Optional[int] = None) -> float:
    n = len(clean) if valid_length is None else valid_length
    return 10.0 * np.log10(signal_power(clean[:n]) / signal_power(noise[:n]))


def corrupt(clean, source: NoiseSource, target: SnrTarget | float, valid_length: Optional[int] = None,
            seed: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(noisy, noise)`` with ``noisy = clean + noise`` at the target SNR."""
    clean = np.asarray(clean, dtype=np.float64)
    snr = target.value if isinstance(target, SnrTarget) else float(target)
    n = len(clean) if valid_length is None else int(valid_length)
    p_clean = signal_power(clean[:n])
    if n == 0 or p_clean == 0:
        raise ZeroPowerError("clean signal has zero power over its valid region")
    p_noise = p_clean / 10.0 ** (snr / 10.0)
    seed = source.rng_seed if seed is None else seed

    noise = np.zeros_like(clean)
    if source.kind == "mixture":
        comps = mixture_components(source, n, seed, power=p_noise)
        noise[:n] = np.sum(list(comps.values()), axis=0)
    else:
        raw = noise_excerpt(source, n, seed)
        p_raw = signal_power(raw)
        if p_raw == 0:
            raise ZeroPowerError("noise excerpt has zero power")
        noise[:n] = raw * np.sqrt(p_noise / p_raw)
    return clean + noise, noise


def corrupt_batch(clean: np.ndarray, source: NoiseSource, snr_db, valid_lengths=None, seed: int = 0) -> np.ndarray:
    """Corrupt each row independently; ``snr_db`` may be a scalar or per-row."""
    clean = np.asarray(clean, dtype=np.float64)
    snrs = np.broadcast_to(np.asarray(snr_db, dtype=float), (len(clean),))
    seeds = np.random.SeedSequence(seed).generate_state(len(clean))
    out = np.empty_like(clean)
    for i, row in enumerate(clean):
        v = None if valid_lengths is None else int(valid_lengths[i])
        out[i], _ = corrupt(row, source, snrs[i], valid_length=v, seed=int(seeds[i]))
    return out


# ---------------------------------------------------------------------------
# stand-ins for the noise stress test records


def synthetic_noise_record(kind: str, duration: float = 600.0, fs: float = 250.0, seed: int = 0) -> NoiseSource:
    """Rough spectral stand-ins for the bw/em/ma records when the real ones
    are not on disk: bw is drifting sub-hertz sinusoids, em is bursty
    low-frequency noise with steps, ma is 20-100 Hz band-limited noise."""
    n = int(round(duration * fs))
    rng = np.random.default_rng(seed)
    t = np.arange(n) / fs
    if kind == "bw":
        x = np.zeros(n)
        for f in rng.uniform(0.05, 0.5, size=4):
            x += rng.uniform(0.5, 1.0) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        b, a = sps.butter(2, 0.7, fs=fs)
        x += sps.filtfilt(b, a, np.cumsum(rng.standard_normal(n)) / np.sqrt(fs))
    elif kind == "em":
        b, a = sps.butter(2, [1.0, 10.0], btype="band", fs=fs)
        base = sps.filtfilt(b, a, rng.standard_normal(n))
        env = sps.filtfilt(*sps.butter(1, 0.2, fs=fs), (rng.random(n) < 0.002).astype(float) * 400)
        steps = np.cumsum(rng.standard_normal(n) * (rng.random(n) < 0.001))
        x = base * (0.3 + np.abs(env)) + 0.5 * steps
    elif kind == "ma":
        b, a = sps.butter(4, [20.0, min(100.0, 0.45 * fs)], btype="band", fs=fs)
        x = sps.filtfilt(b, a, rng.standard_normal(n))
    else:
        raise ValueError(f"no synthetic generator for {kind!r}")
    return NoiseSource(kind, x - x.mean(), rng_seed=seed)


def noise_record_source(record, kind: str, target_rate: float = 250.0, channel: int = 0) -> NoiseSource:
    """Wrap a loaded noise record (e.g. NSTDB ``bw``) after resampling."""
    from .wfdb import resample

    rec = resample(record, target_rate)
    return NoiseSource(kind, rec.signals[channel])


def equal_mixture(sources: dict[str, NoiseSource], seed: int = 0) -> NoiseSource:
    w = 1.0 / len(sources)
    return NoiseSource("mixture", weights={k: w for k in sources}, components=dict(sources), rng_seed=seed)
