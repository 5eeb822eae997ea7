"""Reading and writing PhysioNet WFDB records.

Only single-segment records whose channels share one signal file are
handled, in format 212 (two 12-bit samples packed into three bytes) or
format 16 (little-endian int16).  Annotation files use the MIT binary
layout.  Everything here works on bytes so tests need no files; the
``load_record``/``save_record`` helpers add the disk I/O.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy import signal as sps

from .errors import ParseError, RangeError, TruncationError, UnsupportedFormat

SUPPORTED_FORMATS = (212, 16)
DEFAULT_GAIN = 200.0

# MIT annotation codes (subset of ecgcodes.h that matters for ECG beats/rhythm).
ANNOTATION_SYMBOLS = {
    1: "N", 2: "L", 3: "R", 4: "a", 5: "V", 6: "F", 7: "J", 8: "A", 9: "S",
    10: "E", 11: "j", 12: "/", 13: "Q", 14: "~", 16: "|", 18: "s", 19: "T",
    20: "*", 21: "D", 22: '"', 23: "=", 24: "p", 25: "B", 26: "^", 27: "t",
    28: "+", 29: "u", 30: "?", 31: "!", 32: "[", 33: "]", 34: "e", 35: "n",
    36: "@", 37: "x", 38: "f", 39: "(", 40: ")", 41: "r",
}
SYMBOL_CODES = {v: k for k, v in ANNOTATION_SYMBOLS.items()}
BEAT_CODES = frozenset({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 25, 30, 34, 35, 38, 41})
RHYTHM_CODE = 28

_SKIP, _NUM, _SUB, _CHN, _AUX = 59, 60, 61, 62, 63


@dataclass
class SignalSpec:
    file_name: str
    fmt: int = 212
    gain: float = DEFAULT_GAIN
    baseline: int = 0
    units: str = "mV"
    adc_resolution: int = 12
    adc_zero: int = 0
    initial_value: int = 0
    checksum: int = 0
    block_size: int = 0
    description: str = ""


@dataclass
class RecordHeader:
    record_name: str
    n_signals: int
    sampling_rate: float
    n_samples: int
    signals: list[SignalSpec] = field(default_factory=list)

    def __post_init__(self):
        if self.n_signals < 1:
            raise ValueError("n_signals must be >= 1")
        if not self.sampling_rate > 0:
            raise ValueError("sampling_rate must be positive")
        for s in self.signals:
            if s.fmt not in SUPPORTED_FORMATS:
                raise UnsupportedFormat(f"format {s.fmt} not supported (use 212 or 16)")
            if s.gain == 0:
                raise ValueError("gain must be nonzero")


@dataclass
class Annotation:
    sample_index: int
    kind: str  # "beat", "rhythm" or "other"
    label: str
    code: int = 0
    aux: str = ""
    subtype: int = 0
    channel: int = 0
    num: int = 0


@dataclass
class Record:
    header: RecordHeader
    signals: np.ndarray  # (n_signals, n_samples), physical units
    annotations: list[Annotation] = field(default_factory=list)

    def __post_init__(self):
        self.signals = np.atleast_2d(np.asarray(self.signals, dtype=np.float64))
        if self.signals.shape != (self.header.n_signals, self.header.n_samples):
            raise ValueError(
                f"signal array shape {self.signals.shape} does not match header "
                f"({self.header.n_signals}, {self.header.n_samples})"
            )

    @property
    def sampling_rate(self) -> float:
        return self.header.sampling_rate

    @property
    def n_samples(self) -> int:
        return self.header.n_samples

    def digital(self) -> np.ndarray:
        """Raw ADC integers, ``round(physical * gain + baseline)``."""
        gains = np.array([s.gain for s in self.header.signals])[:, None]
        base = np.array([s.baseline for s in self.header.signals])[:, None]
        return np.rint(self.signals * gains + base).astype(np.int64)

    def beat_indices(self) -> np.ndarray:
        return np.array([a.sample_index for a in self.annotations if a.kind == "beat"], dtype=np.int64)

    def afib_intervals(self) -> list[tuple[int, int]]:
        """Half-open sample intervals covered by "(AFIB" rhythm episodes."""
        out = []
        start = None
        for a in self.annotations:
            if a.kind != "rhythm":
                continue
            if a.label.startswith("(AFIB"):
                if start is None:
                    start = a.sample_index
            elif start is not None:
                out.append((start, a.sample_index))
                start = None
        if start is not None:
            out.append((start, self.n_samples))
        return out


# ---------------------------------------------------------------------------
# header


def _format_number(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def parse_header(text: str) -> RecordHeader:
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(n, ln) for n, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty header", line=1)
    lineno, first = lines[0]
    parts = first.split()
    if len(parts) < 2:
        raise ParseError("record line needs at least a name and signal count", line=lineno)
    name = parts[0]
    if "/" in name:
        raise UnsupportedFormat("multi-segment records are not supported")
    try:
        n_signals = int(parts[1])
        fs = float(parts[2].split("/")[0].split("(")[0]) if len(parts) > 2 else 250.0
        n_samples = int(parts[3]) if len(parts) > 3 else 0
    except ValueError as exc:
        raise ParseError(f"bad record line: {exc}", line=lineno) from None
    if n_signals < 1:
        raise ParseError("record declares no signals", line=lineno)
    if fs <= 0:
        raise ParseError("sampling frequency must be positive", line=lineno)
    if len(lines) - 1 < n_signals:
        raise ParseError(f"expected {n_signals} signal lines, found {len(lines) - 1}", line=lineno)

    specs = []
    for lineno, ln in lines[1 : 1 + n_signals]:
        specs.append(_parse_signal_line(ln, lineno))
    return RecordHeader(name, n_signals, fs, n_samples, specs)


def _parse_signal_line(ln: str, lineno: int) -> SignalSpec:
    parts = ln.split(maxsplit=8)
    if len(parts) < 2:
        raise ParseError("signal line needs a file name and format", line=lineno)
    fmt_field = parts[1]
    try:
        fmt = int(fmt_field.split("x")[0].split(":")[0].split("+")[0])
    except ValueError:
        raise ParseError(f"bad format field {fmt_field!r}", line=lineno) from None
    if fmt not in SUPPORTED_FORMATS:
        raise UnsupportedFormat(f"line {lineno}: format {fmt} not supported (use 212 or 16)")
    spec = SignalSpec(parts[0], fmt)
    try:
        baseline_given = False
        if len(parts) > 2:
            g = parts[2]
            if "/" in g:
                g, spec.units = g.split("/", 1)
            if "(" in g:
                g, b = g.split("(", 1)
                spec.baseline = int(b.rstrip(")"))
                baseline_given = True
            spec.gain = float(g) or DEFAULT_GAIN
        if len(parts) > 3:
            spec.adc_resolution = int(parts[3])
        if len(parts) > 4:
            spec.adc_zero = int(parts[4])
            if not baseline_given:
                spec.baseline = spec.adc_zero
        if len(parts) > 5:
            spec.initial_value = int(parts[5])
        if len(parts) > 6:
            spec.checksum = int(parts[6])
        if len(parts) > 7:
            spec.block_size = int(parts[7])
        if len(parts) > 8:
            spec.description = parts[8]
    except ValueError as exc:
        raise ParseError(f"bad signal field: {exc}", line=lineno) from None
    return spec


def format_header(header: RecordHeader) -> str:
    lines = [f"{header.record_name} {header.n_signals} {_format_number(header.sampling_rate)} {header.n_samples}"]
    for s in header.signals:
        line = (
            f"{s.file_name} {s.fmt} {_format_number(s.gain)}({s.baseline})/{s.units} "
            f"{s.adc_resolution} {s.adc_zero} {s.initial_value} {s.checksum} {s.block_size}"
        )
        if s.description:
            line += f" {s.description}"
        lines.append(line)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# signal formats


def decode_212(data: bytes, n_values: int) -> np.ndarray:
    """Unpack ``n_values`` 12-bit two's-complement samples."""
    need = (3 * n_values + 1) // 2
    if len(data) < need:
        raise TruncationError(need, len(data))
    n_triples = (n_values + 1) // 2
    buf = np.frombuffer(data[:need], dtype=np.uint8)
    if len(buf) < 3 * n_triples:
        buf = np.concatenate([buf, np.zeros(3 * n_triples - len(buf), dtype=np.uint8)])
    b = buf[: 3 * n_triples].reshape(-1, 3).astype(np.int64)
    out = np.empty(2 * n_triples, dtype=np.int64)
    out[0::2] = b[:, 0] | ((b[:, 1] & 0x0F) << 8)
    out[1::2] = b[:, 2] | ((b[:, 1] & 0xF0) << 4)
    out[out > 2047] -= 4096
    return out[:n_values]


def encode_212(values: np.ndarray) -> bytes:
    v = np.asarray(values, dtype=np.int64)
    n = len(v)
    if n % 2:
        v = np.append(v, 0)
    u = v & 0xFFF
    b = np.empty((len(u) // 2, 3), dtype=np.uint8)
    b[:, 0] = u[0::2] & 0xFF
    b[:, 1] = ((u[0::2] >> 8) & 0x0F) | ((u[1::2] >> 4) & 0xF0)
    b[:, 2] = u[1::2] & 0xFF
    return b.tobytes()[: (3 * n + 1) // 2]


def _checksum(raw: np.ndarray) -> int:
    c = int(raw.sum()) & 0xFFFF
    return c - 0x10000 if c >= 0x8000 else c


def read_signals(header: RecordHeader, data: bytes) -> np.ndarray:
    fmts = {s.fmt for s in header.signals}
    if len(fmts) != 1:
        raise UnsupportedFormat("channels with mixed formats are not supported")
    fmt = fmts.pop()
    n_values = header.n_samples * header.n_signals
    if fmt == 212:
        flat = decode_212(data, n_values)
    else:
        need = 2 * n_values
        if len(data) < need:
            raise TruncationError(need, len(data))
        flat = np.frombuffer(data[:need], dtype="<i2").astype(np.int64)
    return flat.reshape(header.n_samples, header.n_signals).T


def write_signals(header: RecordHeader, raw: np.ndarray) -> bytes:
    fmt = header.signals[0].fmt
    flat = raw.T.reshape(-1)
    if fmt == 212:
        return encode_212(flat)
    return flat.astype("<i2").tobytes()


# ---------------------------------------------------------------------------
# annotations


def _classify_code(code: int) -> str:
    if code in BEAT_CODES:
        return "beat"
    if code == RHYTHM_CODE:
        return "rhythm"
    return "other"


def read_annotations(data: bytes) -> list[Annotation]:
    words = np.frombuffer(data[: len(data) // 2 * 2], dtype="<u2")
    anns: list[Annotation] = []
    t = 0
    i = 0
    num = 0
    chan = 0
    pending_skip = 0
    while i < len(words):
        w = int(words[i])
        code = w >> 10
        val = w & 0x3FF
        i += 1
        if code == 0 and val == 0:
            break
        if code == _SKIP:
            if i + 1 >= len(words):
                raise ParseError("truncated SKIP in annotation stream")
            hi, lo = int(words[i]), int(words[i + 1])
            skip = (hi << 16) | lo
            if skip >= 1 << 31:
                skip -= 1 << 32
            pending_skip += skip
            i += 2
        elif code == _NUM:
            num = val - 1024 if val > 511 else val
            anns[-1].num = num
        elif code == _SUB:
            anns[-1].subtype = val
        elif code == _CHN:
            chan = val
            anns[-1].channel = chan
        elif code == _AUX:
            nbytes = val
            raw = data[2 * i : 2 * i + nbytes]
            if len(raw) < nbytes:
                raise ParseError("truncated AUX string in annotation stream")
            aux = raw.decode("latin-1").rstrip("\x00")
            anns[-1].aux = aux
            if anns[-1].kind == "rhythm":
                anns[-1].label = aux
            i += (nbytes + 1) // 2
        else:
            t += pending_skip + val
            pending_skip = 0
            kind = _classify_code(code)
            sym = ANNOTATION_SYMBOLS.get(code, str(code))
            anns.append(Annotation(t, kind, sym, code=code, channel=chan, num=num))
    return anns


def write_annotations(annotations: Sequence[Annotation]) -> bytes:
    out = bytearray()
    prev_t = 0
    num = 0
    chan = 0
    for a in annotations:
        code = a.code or _code_for(a)
        dt = a.sample_index - prev_t
        if dt < 0:
            raise ValueError("annotation sample indices must be non-decreasing")
        if dt > 1023:
            out += (_SKIP << 10).to_bytes(2, "little")
            out += ((dt >> 16) & 0xFFFF).to_bytes(2, "little")
            out += (dt & 0xFFFF).to_bytes(2, "little")
            dt = 0
        out += ((code << 10) | dt).to_bytes(2, "little")
        prev_t = a.sample_index
        if a.subtype:
            out += ((_SUB << 10) | (a.subtype & 0x3FF)).to_bytes(2, "little")
        if a.channel != chan:
            chan = a.channel
            out += ((_CHN << 10) | (chan & 0x3FF)).to_bytes(2, "little")
        if a.num != num:
            num = a.num
            out += ((_NUM << 10) | (num & 0x3FF)).to_bytes(2, "little")
        aux = a.aux or (a.label if a.kind == "rhythm" else "")
        if aux:
            b = aux.encode("latin-1")
            out += ((_AUX << 10) | len(b)).to_bytes(2, "little")
            out += b + (b"\x00" if len(b) % 2 else b"")
    out += b"\x00\x00"
    return bytes(out)


def _code_for(a: Annotation) -> int:
    if a.kind == "rhythm":
        return RHYTHM_CODE
    if a.label in SYMBOL_CODES:
        return SYMBOL_CODES[a.label]
    raise ValueError(f"no MIT code for annotation label {a.label!r}")


# ---------------------------------------------------------------------------
# records


def read_record(header_bytes: bytes, signal_bytes: bytes, annotation_bytes: Optional[bytes] = None) -> Record:
    header = parse_header(header_bytes.decode("ascii", errors="replace"))
    raw = read_signals(header, signal_bytes)
    gains = np.array([s.gain for s in header.signals])[:, None]
    base = np.array([s.baseline for s in header.signals])[:, None]
    signals = (raw - base) / gains
    anns = read_annotations(annotation_bytes) if annotation_bytes else []
    anns.sort(key=lambda a: a.sample_index)
    return Record(header, signals, anns)


def write_record(record: Record) -> tuple[bytes, bytes, Optional[bytes]]:
    """Encode a record as (header, signal, annotation) bytes.

    The annotation element is ``None`` when the record has no annotations.
    """
    raw = record.digital()
    for ch, s in enumerate(record.header.signals):
        lo, hi = (-2048, 2047) if s.fmt == 212 else (-32768, 32767)
        bad = np.flatnonzero((raw[ch] < lo) | (raw[ch] > hi))
        if len(bad):
            raise RangeError(ch, int(bad[0]), int(raw[ch, bad[0]]))
    header = dataclasses.replace(record.header, signals=[
        dataclasses.replace(
            s,
            initial_value=int(raw[ch, 0]) if raw.shape[1] else 0,
            checksum=_checksum(raw[ch]),
        )
        for ch, s in enumerate(record.header.signals)
    ])
    hdr = format_header(header).encode("ascii")
    sig = write_signals(header, raw)
    ann = write_annotations(record.annotations) if record.annotations else None
    return hdr, sig, ann


def load_record(path: str | os.PathLike, annotator: Optional[str] = "atr") -> Record:
    """Read ``<path>.hea`` plus its signal file and optional annotation file."""
    path = os.fspath(path)
    with open(path + ".hea", "rb") as fh:
        hdr = fh.read()
    header = parse_header(hdr.decode("ascii", errors="replace"))
    sig_path = os.path.join(os.path.dirname(path), header.signals[0].file_name)
    with open(sig_path, "rb") as fh:
        sig = fh.read()
    ann = None
    if annotator and os.path.exists(f"{path}.{annotator}"):
        with open(f"{path}.{annotator}", "rb") as fh:
            ann = fh.read()
    return read_record(hdr, sig, ann)


def save_record(record: Record, directory: str | os.PathLike, annotator: str = "atr") -> str:
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    hdr, sig, ann = write_record(record)
    stem = os.path.join(directory, record.header.record_name)
    with open(stem + ".hea", "wb") as fh:
        fh.write(hdr)
    with open(os.path.join(directory, record.header.signals[0].file_name), "wb") as fh:
        fh.write(sig)
    if ann is not None:
        with open(f"{stem}.{annotator}", "wb") as fh:
            fh.write(ann)
    return stem


# ---------------------------------------------------------------------------
# resampling


def resample(record: Record, target_rate: float) -> Record:
    """Polyphase windowed-sinc resampling of every channel to ``target_rate``."""
    if not target_rate > 0:
        raise ValueError("target_rate must be positive")
    src = record.sampling_rate
    if target_rate == src:
        return record
    ratio = Fraction(target_rate / src).limit_denominator(10_000)
    n_out = int(round(record.n_samples * target_rate / src))
    out = sps.resample_poly(record.signals, ratio.numerator, ratio.denominator, axis=1)
    if out.shape[1] >= n_out:
        out = out[:, :n_out]
    else:
        out = np.pad(out, ((0, 0), (0, n_out - out.shape[1])), mode="edge")
    scale = target_rate / src
    anns = [
        dataclasses.replace(a, sample_index=min(int(round(a.sample_index * scale)), max(n_out - 1, 0)))
        for a in record.annotations
    ]
    header = dataclasses.replace(record.header, sampling_rate=float(target_rate), n_samples=n_out)
    return Record(header, out, anns)


# ---------------------------------------------------------------------------
# synthetic ECG


@dataclass
class SyntheticEcgSpec:
    heart_rate: float = 75.0
    duration: float = 10.0
    sampling_rate: float = 250.0
    afib_segments: list[tuple[float, float]] = field(default_factory=list)
    rr_jitter: float = 0.0
    rng_seed: int = 0
    amplitude_jitter: float = 0.0
    afib_rate_factor: float = 0.7

    def __post_init__(self):
        if not 20 <= self.heart_rate <= 300:
            raise ValueError("heart_rate must be within [20, 300] bpm")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        for a, b in self.afib_segments:
            if not 0 <= a <= b <= self.duration:
                raise ValueError(f"AFib segment ({a}, {b}) outside [0, {self.duration}]")


# wave amplitudes in mV
P_AMP, R_AMP, S_AMP, T_AMP = 0.15, 1.0, -0.25, 0.3


def _beat_waveform(t: np.ndarray, with_p: bool, scale: float) -> np.ndarray:
    """One P-QRS-T complex sampled at offsets ``t`` (s) from the R peak."""
    y = T_AMP * np.exp(-0.5 * ((t - 0.25) / 0.04) ** 2)
    if with_p:
        y = y + P_AMP * np.exp(-0.5 * ((t + 0.16) / 0.02) ** 2)
    qrs = np.interp(t, [-0.04, 0.0, 0.03, 0.05], [0.0, R_AMP, S_AMP, 0.0], left=0.0, right=0.0)
    return scale * (y + qrs)


def _in_segments(t: float, segments) -> bool:
    return any(a <= t < b for a, b in segments)


def synthesize_ecg(spec: SyntheticEcgSpec) -> Record:
    """Template ECG with ground-truth beat and rhythm annotations.

    Outside AFib the RR interval is ``60/heart_rate`` with mild jitter
    (a quarter of ``rr_jitter``).  Inside AFib segments RR shrinks by
    ``afib_rate_factor`` with full ``rr_jitter``, P waves are dropped and
    low-amplitude fibrillatory waves are added.
    """
    rng = np.random.default_rng(spec.rng_seed)
    fs = spec.sampling_rate
    n = int(round(spec.duration * fs))
    rr0 = 60.0 / spec.heart_rate
    segs = sorted(spec.afib_segments)

    r_times = []
    t = 0.5 * rr0
    while t < spec.duration:
        r_times.append(t)
        u = rng.uniform(-1.0, 1.0)
        if _in_segments(t, segs):
            rr = rr0 * spec.afib_rate_factor * (1.0 + spec.rr_jitter * u)
        else:
            rr = rr0 * (1.0 + 0.25 * spec.rr_jitter * u)
        t += max(rr, 0.25)

    x = np.zeros(n)
    r_idx = []
    half = int(0.5 * fs)
    for tr in r_times:
        i = int(round(tr * fs))
        if i + int(0.05 * fs) >= n:
            break
        r_idx.append(i)
        lo, hi = max(0, i - half), min(n, i + half)
        offs = (np.arange(lo, hi) - i) / fs
        scale = 1.0 + spec.amplitude_jitter * rng.uniform(-1.0, 1.0)
        x[lo:hi] += _beat_waveform(offs, not _in_segments(tr, segs), scale)

    tt = np.arange(n) / fs
    for a, b in segs:
        m = (tt >= a) & (tt < b)
        f = rng.uniform(5.0, 8.0)
        phase = rng.uniform(0, 2 * np.pi)
        x[m] += 0.04 * np.sin(2 * np.pi * f * tt[m] + phase) * (1 + 0.3 * np.sin(2 * np.pi * 0.7 * tt[m]))

    anns = [Annotation(i, "beat", "N", code=1) for i in r_idx]
    rhythm = []
    if not segs or segs[0][0] > 0:
        rhythm.append(Annotation(0, "rhythm", "(N", code=RHYTHM_CODE, aux="(N"))
    for a, b in segs:
        rhythm.append(Annotation(int(round(a * fs)), "rhythm", "(AFIB", code=RHYTHM_CODE, aux="(AFIB"))
        if int(round(b * fs)) < n:
            rhythm.append(Annotation(int(round(b * fs)), "rhythm", "(N", code=RHYTHM_CODE, aux="(N"))
    anns = sorted(rhythm + anns, key=lambda a: a.sample_index)

    header = RecordHeader(
        "synth", 1, float(fs), n,
        [SignalSpec("synth.dat", 212, DEFAULT_GAIN, 0, "mV", 12, 0, description="ECG")],
    )
    return Record(header, x[None, :], anns)
