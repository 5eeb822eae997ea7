"""End-to-end experiment runner: config, dataset preparation, training,
evaluation, hyperparameter search and run artifacts.

Every command takes an :class:`ExperimentConfig` and writes its outputs
under a directory.  Numbers depend only on the config, the seed and the
input files (whose hashes go into each run's manifest).
"""
from __future__ import annotations

import copy
import hashlib
import itertools
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from . import metrics as M
from .datasets import synthetic_records
from .errors import ConfigError, EcgDaeError
from .models import CLF_NAMES, DAE_NAMES, build, classify, denoise, get_spec
from .nn import TrainConfig, history_csv, load, save, train
from .nn.network import Network
from .noise import REAL_KINDS, NoiseSource, corrupt_batch, noise_record_source, synthetic_noise_record
from .preprocess import (
    CLASSES, SPLIT_NAMES, TARGET_RATE, WINDOW_LENGTH, PanTompkinsConfig, assemble_dataset, atomic_write,
    detect_r_peaks, load_split, normalize, preprocess_record, save_split, segment_beats, windows_to_arrays,
)
from .wfdb import Record, load_record, resample, save_record

log = logging.getLogger(__name__)

AFDB_EXCLUDE = ("00735", "03665", "04936", "05091")
LR_GRID = (1e-2, 1e-3, 1e-4, 1e-5)


class DataError(EcgDaeError):
    """Input data missing, unreadable or unusable."""


# ---------------------------------------------------------------------------
# configuration


def _default_config() -> dict:
    return {
        "seed": 0,
        "data": {
            "afdb_dir": None,
            "nsrdb_dir": None,
            "nstdb_dir": None,
            "records": [],  # explicit record paths (without extension)
            "exclude": list(AFDB_EXCLUDE),
            "use_annotations": False,
            "synthetic": {"n_records": 24, "duration": 120.0},
        },
        "preprocess": {
            "window_seconds": 1.2,
            "per_class": 30000,
            "split": {"train": 0.75, "test": 0.15, "validation": 0.10},
        },
        "noise": {
            "kinds": ["awgn"],
            "snr_levels": [-10, -5, 0, 5],
            "eval_snr": -10,
            "mixture_weights": {"bw": 1 / 3, "em": 1 / 3, "ma": 1 / 3},
        },
        "models": {
            "dae": list(DAE_NAMES),
            "clf": list(CLF_NAMES),
            "denoiser": None,  # path to a DAE model.bin fed into classifier training
        },
        "train": {},  # per-architecture overrides, e.g. {"DAE-CNN": {"lr": 1e-3}}
        "lr_fallback": None,  # DAE: also train at this lr and keep the better run
        "search": {
            "enabled": False,
            "model": "CLF-CNN",
            "lr": list(LR_GRID),
            "dropout": [0.1, 0.5],
            "dropout_samples": 5,
            "width": [1.0],
            "max_epochs": None,
        },
    }


def _merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if k not in out:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(out[k], dict) and k not in ("train", "mixture_weights", "split"):
            if not isinstance(v, dict):
                raise ConfigError(f"{path + k} must be a mapping")
            out[k] = _merge(out[k], v, path + k + ".")
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    """Validated experiment settings; defaults describe the full-scale experiment."""

    values: dict = field(default_factory=_default_config)

    def __post_init__(self):
        self.values = _merge(_default_config(), self.values)
        self.validate()

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    def validate(self):
        v = self.values
        split = v["preprocess"]["split"]
        if set(split) != set(SPLIT_NAMES):
            raise ConfigError(f"split must name exactly {list(SPLIT_NAMES)}")
        if any(r < 0 for r in split.values()) or not np.isclose(sum(split.values()), 1.0):
            raise ConfigError(f"split ratios must be non-negative and sum to 1, got {split}")
        if not np.isclose(v["preprocess"]["window_seconds"] * TARGET_RATE, WINDOW_LENGTH):
            raise ConfigError(f"window_seconds must give {WINDOW_LENGTH} samples at {TARGET_RATE:g} Hz")
        if int(v["preprocess"]["per_class"]) < 1:
            raise ConfigError("per_class must be positive")
        n = v["noise"]
        for k in n["kinds"]:
            if k not in ("awgn", "mixture") + REAL_KINDS:
                raise ConfigError(f"unknown noise kind {k!r}")
        if not n["kinds"] or not n["snr_levels"]:
            raise ConfigError("noise plan needs at least one kind and one SNR level")
        w = n["mixture_weights"]
        if any(x < 0 for x in w.values()) or not np.isclose(sum(w.values()), 1.0) or set(w) - set(REAL_KINDS):
            raise ConfigError("mixture weights must be bw/em/ma, non-negative, summing to 1")
        for name in list(v["models"]["dae"]) + list(v["models"]["clf"]) + list(v["train"]):
            if name not in DAE_NAMES + CLF_NAMES:
                raise ConfigError(f"unknown architecture {name!r}")
        for name, over in v["train"].items():
            try:
                self.train_config(name, **{})
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad train override for {name}: {exc}") from None
        s = v["search"]
        if s["enabled"]:
            if not s["lr"] or not s["width"] or int(s["dropout_samples"]) < 1:
                raise ConfigError("search enabled with an empty search space")
            lo, hi = s["dropout"]
            if not 0 <= lo <= hi < 1:
                raise ConfigError("dropout range must satisfy 0 <= lo <= hi < 1")
            if s["model"] not in CLF_NAMES:
                raise ConfigError("search runs over classifier architectures only")

    def train_config(self, name: str, **extra) -> TrainConfig:
        base = get_spec(name).train_config.to_dict()
        base.update(self.values["train"].get(name, {}))
        base.update(extra)
        base["seed"] = self.seed
        return TrainConfig(**base)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.values, sort_keys=True)

    @classmethod
    def from_file(cls, path, seed: Optional[int] = None) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping")
        if seed is not None:
            raw["seed"] = seed
        return cls(raw)


# ---------------------------------------------------------------------------
# run artifacts


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _split_hashes(directory) -> dict:
    return {f: file_hash(os.path.join(directory, f)) for f in sorted(os.listdir(directory))
            if f.endswith(".bin") or f == "manifest.json"}


@dataclass
class RunArtifact:
    run_id: str
    directory: str
    config: dict
    report: dict
    history: list = field(default_factory=list)
    model_path: Optional[str] = None


def _write_text(path, text: str):
    atomic_write(path, text.encode())


def _finish_run(out_dir, kind, name, config: ExperimentConfig, net: Optional[Network], history,
                report, inputs: dict, extra_files: Optional[dict] = None) -> RunArtifact:
    os.makedirs(out_dir, exist_ok=True)
    snapshot = copy.deepcopy(config.values)
    run_id = hashlib.sha256(
        json.dumps({"kind": kind, "name": name, "config": snapshot, "inputs": inputs}, sort_keys=True).encode()
    ).hexdigest()[:12]
    _write_text(os.path.join(out_dir, "config.yaml"), config.to_yaml())
    model_path = None
    if net is not None:
        model_path = os.path.join(out_dir, "model.bin")
        save(net, model_path)
    if history is not None:
        _write_text(os.path.join(out_dir, "history.csv"), history_csv(history))
    _write_text(os.path.join(out_dir, "report.json"), M.report_json(report))
    for fname, text in (extra_files or {}).items():
        _write_text(os.path.join(out_dir, fname), text)
    manifest = {"run_id": run_id, "kind": kind, "architecture": name, "inputs": inputs}
    _write_text(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, indent=1, sort_keys=True))
    return RunArtifact(run_id, out_dir, snapshot, report, history or [], model_path)


# ---------------------------------------------------------------------------
# data loading


def _missing_paths(stems) -> list[str]:
    missing = []
    for stem in stems:
        for ext in (".hea",):
            if not os.path.exists(stem + ext):
                missing.append(stem + ext)
    return missing


def _db_stems(directory, exclude) -> list[str]:
    if not os.path.isdir(directory):
        raise DataError(f"data directory not found: {directory}")
    names = sorted(f[:-4] for f in os.listdir(directory) if f.endswith(".hea"))
    return [os.path.join(directory, n) for n in names if n not in exclude]


def load_records(config: ExperimentConfig) -> list[Record]:
    """Records named by the config, or synthetic ones when none are given."""
    d = config["data"]
    stems = list(d["records"])
    for key in ("afdb_dir", "nsrdb_dir"):
        if d[key]:
            stems += _db_stems(d[key], set(d["exclude"]))
    if not stems:
        syn = d["synthetic"]
        log.info("no record paths configured; synthesizing %d records", syn["n_records"])
        return synthetic_records(int(syn["n_records"]), seed=config.seed, duration=float(syn["duration"]))
    missing = _missing_paths(stems)
    if missing:
        raise DataError("missing records:\n  " + "\n  ".join(missing))
    out = []
    for stem in stems:
        try:
            out.append(load_record(stem))
        except (OSError, EcgDaeError) as exc:
            raise DataError(f"cannot read record {stem}: {exc}") from exc
    return out


def noise_sources(config: ExperimentConfig) -> dict[str, NoiseSource]:
    """One source per configured kind; real kinds come from ``nstdb_dir``
    when present and from the synthetic stand-ins otherwise."""
    nz = config["noise"]
    need = set(k for k in nz["kinds"] if k in REAL_KINDS)
    if "mixture" in nz["kinds"]:
        need |= set(nz["mixture_weights"])
    real = {}
    for k in sorted(need):
        directory = config["data"]["nstdb_dir"]
        if directory:
            stem = os.path.join(directory, k)
            if not os.path.exists(stem + ".hea"):
                raise DataError(f"missing noise record {stem}.hea")
            real[k] = noise_record_source(load_record(stem, annotator=None), k)
        else:
            real[k] = synthetic_noise_record(k, seed=config.seed + REAL_KINDS.index(k))
    out = {}
    for k in nz["kinds"]:
        if k == "awgn":
            out[k] = NoiseSource("awgn", rng_seed=config.seed)
        elif k == "mixture":
            out[k] = NoiseSource("mixture", weights=dict(nz["mixture_weights"]),
                                 components={c: real[c] for c in nz["mixture_weights"]}, rng_seed=config.seed)
        else:
            out[k] = real[k]
    return out


def _split_arrays(split, noisy, name):
    x, y, valid = windows_to_arrays(split[name])
    xn = noisy.get(name)
    return x, (x if xn is None else xn), y, valid


def _load_split_dir(directory):
    if not os.path.exists(os.path.join(directory, "manifest.json")):
        raise DataError(f"no split manifest in {directory}")
    try:
        return load_split(directory)
    except (OSError, EcgDaeError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read split directory {directory}: {exc}") from exc


def _shaped(net: Network, x):
    return np.asarray(x, dtype=net.dtype).reshape((len(x),) + net.input_shape)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(config: ExperimentConfig, out_dir) -> list[str]:
    """Write the synthetic records a synthetic-only config would use."""
    os.makedirs(out_dir, exist_ok=True)
    syn = config["data"]["synthetic"]
    paths = []
    for rec in synthetic_records(int(syn["n_records"]), seed=config.seed, duration=float(syn["duration"])):
        paths.append(save_record(rec, out_dir))
    log.info("wrote %d synthetic records to %s", len(paths), out_dir)
    return paths


def cmd_preprocess(config: ExperimentConfig, out_dir) -> str:
    records = load_records(config)
    pt = PanTompkinsConfig()
    windows = []
    per_source = {}
    for rec in records:
        ws = preprocess_record(rec, pt, config["data"]["use_annotations"])
        counts = {c: sum(w.label == c for w in ws) for c in CLASSES}
        per_source[rec.header.record_name] = counts
        log.info("record %s: %s", rec.header.record_name, counts)
        windows.extend(ws)
    split_cfg = config["preprocess"]["split"]
    percent = (round(100 * split_cfg["train"]), round(100 * split_cfg["test"]), round(100 * split_cfg["validation"]))
    try:
        split = assemble_dataset(windows, int(config["preprocess"]["per_class"]), config.seed, percent)
    except EcgDaeError as exc:
        raise DataError(str(exc)) from exc
    log.info("split sizes %s", split.counts())
    save_split(split, out_dir, extra={"per_source_counts": per_source})
    _write_text(os.path.join(out_dir, "config.yaml"), config.to_yaml())
    return out_dir


def cmd_corrupt(config: ExperimentConfig, data_dir, out_dir) -> str:
    """Add calibrated noise.  Train and validation windows draw their SNR
    uniformly from ``snr_levels`` and their kind uniformly from ``kinds``;
    test windows all use ``eval_snr``."""
    split, _, manifest = _load_split_dir(data_dir)
    sources = noise_sources(config)
    kinds = list(config["noise"]["kinds"])
    levels = np.asarray(config["noise"]["snr_levels"], dtype=float)
    rng = np.random.default_rng(config.seed)
    noisy, plan = {}, {}
    for si, name in enumerate(SPLIT_NAMES):
        x, _, valid = windows_to_arrays(split[name])
        n = len(x)
        snr = np.full(n, float(config["noise"]["eval_snr"])) if name == "test" else rng.choice(levels, size=n)
        kind_idx = rng.integers(len(kinds), size=n)
        out = np.zeros_like(x, dtype=np.float64)
        for ki, k in enumerate(kinds):
            rows = np.flatnonzero(kind_idx == ki)
            if len(rows):
                out[rows] = corrupt_batch(x[rows], sources[k], snr[rows], valid[rows],
                                          seed=config.seed * 7919 + si * 31 + ki)
        noisy[name] = out.astype(np.float32)
        plan[name] = {"snr_db": snr.tolist(), "kind": [kinds[i] for i in kind_idx]}
    extra = {k: v for k, v in manifest.items() if k not in ("splits", "source_records")}
    extra["noise_plan"] = plan
    extra["corrupted_from"] = _split_hashes(data_dir)
    save_split(split, out_dir, noisy=noisy, extra=extra)
    _write_text(os.path.join(out_dir, "config.yaml"), config.to_yaml())
    return out_dir


def _denoise_report(name, clean, noisy, out, valid):
    rows = M.denoise_metrics_batch(clean, noisy, out, valid)
    return rows, {"model": name, "n_windows": len(rows), "denoise": M.summarize_denoise(rows)}


def _train_once(name, config, tc, x, y, xv, yv, **layer_kwargs):
    net = build(name, seed=config.seed, train_config=tc, **layer_kwargs)
    net, hist = train(net, (_shaped(net, x), y), (_shaped(net, xv), yv), tc)
    return net, hist


def cmd_train_dae(config: ExperimentConfig, spec_name: str, data_dir, out_dir) -> RunArtifact:
    """Train a DAE on (noisy, clean) train pairs and report on the test split.

    With ``lr_fallback`` set, a second run at that learning rate is trained
    too; both are reported and the one with the lower final validation
    loss is kept.
    """
    if get_spec(spec_name).kind != "dae":
        raise ConfigError(f"{spec_name} is not a denoising autoencoder")
    split, noisy, _ = _load_split_dir(data_dir)
    if not noisy:
        raise DataError(f"{data_dir} has no noisy tensors; run corrupt first")
    xc, xn, _, _ = _split_arrays(split, noisy, "train")
    vc, vn, _, _ = _split_arrays(split, noisy, "validation")
    tc, tn, _, tvalid = _split_arrays(split, noisy, "test")

    lrs = [config.train_config(spec_name).lr]
    fb = config["lr_fallback"]
    if fb is not None and float(fb) not in lrs:
        lrs.append(float(fb))
    runs, timing = [], {}
    for lr in lrs:
        cfg = config.train_config(spec_name, lr=lr)
        log.info("training %s lr=%g", spec_name, lr)
        t0 = time.perf_counter()
        net, hist = _train_once(spec_name, config, cfg, xn, _shaped_target(spec_name, xc), vn,
                                _shaped_target(spec_name, vc))
        out = denoise(net, tn)
        rows, rep = _denoise_report(spec_name, tc, tn, out, tvalid)
        rep.update(lr=lr, epochs=len(hist), final_val_loss=hist[-1]["val_loss"])
        timing[f"lr={lr:g}"] = time.perf_counter() - t0
        runs.append((net, hist, rows, rep))
    best = min(range(len(runs)), key=lambda i: runs[i][3]["final_val_loss"])
    net, hist, rows, rep = runs[best]
    report = dict(rep)
    report["runs"] = [r[3] for r in runs]
    report["chosen_lr"] = rep["lr"]
    extra = {"denoise_long.csv": M.long_format_csv({spec_name: rows}),
             "timing.json": json.dumps({"train_seconds": timing}, indent=1)}
    inputs = {"data": _split_hashes(data_dir), "train_sources": _sources(split.train) + _sources(split.validation)}
    return _finish_run(out_dir, "dae", spec_name, config, net, hist, report, inputs, extra)


def _shaped_target(name, x):
    return np.asarray(x).reshape((len(x),) + get_spec(name).input_shape)


def _sources(windows) -> list:
    return [[w.source[0], int(w.source[1])] for w in windows]


def _with_denoiser(config: ExperimentConfig, denoiser) -> ExperimentConfig:
    """Record a command-line denoiser in the config so the snapshot reproduces the run."""
    if not denoiser:
        return config
    return ExperimentConfig(dict(config.values, models=dict(config["models"], denoiser=os.fspath(denoiser))))


def _classifier_inputs(config, data_dir, denoiser_path):
    """Windows fed to a classifier: noisy ones when present, passed through
    the referenced DAE if any, with the padded tail re-zeroed."""
    split, noisy, _ = _load_split_dir(data_dir)
    dae = None
    path = denoiser_path or config["models"]["denoiser"]
    if path:
        try:
            dae = load(path)
        except (OSError, EcgDaeError) as exc:
            raise DataError(f"cannot load denoiser {path}: {exc}") from exc
    arrays = {}
    for name in SPLIT_NAMES:
        _, x, y, valid = _split_arrays(split, noisy, name)
        if dae is not None and len(x):
            x = denoise(dae, x)
            x[np.arange(WINDOW_LENGTH)[None, :] >= valid[:, None]] = 0.0
        arrays[name] = (np.asarray(x, dtype=np.float64), y)
    return split, arrays, path


def _clf_report(name, net, x, y) -> tuple[dict, "M.ConfusionMatrix"]:
    res = classify(net, x)
    cm = M.confusion(y, res.labels)
    rep = M.classification_report(cm)
    return {"model": name, "n_windows": int(len(y)), "confusion": cm, "metrics": rep.to_dict(),
            "class_counts": {c: int(np.sum(y == i)) for i, c in enumerate(CLASSES)}}, cm


def cmd_train_clf(config: ExperimentConfig, spec_name: str, data_dir, out_dir,
                  denoiser: Optional[str] = None, **layer_kwargs) -> RunArtifact:
    if get_spec(spec_name).kind != "clf":
        raise ConfigError(f"{spec_name} is not a classifier")
    config = _with_denoiser(config, denoiser)
    split, arrays, dpath = _classifier_inputs(config, data_dir, None)
    (x, y), (xv, yv), (xt, yt) = arrays["train"], arrays["validation"], arrays["test"]
    tc = config.train_config(spec_name)
    t0 = time.perf_counter()
    net, hist = _train_once(spec_name, config, tc, x, y, xv, yv, **layer_kwargs)
    report, _ = _clf_report(spec_name, net, xt, yt)
    report.update(epochs=len(hist), denoiser=dpath, hyperparameters=layer_kwargs)
    timing = {"train_seconds": time.perf_counter() - t0}
    inputs = {"data": _split_hashes(data_dir), "train_sources": _sources(split.train) + _sources(split.validation)}
    if dpath:
        inputs["denoiser"] = file_hash(dpath)
    return _finish_run(out_dir, "clf", spec_name, config, net, hist, report, inputs,
                       {"timing.json": json.dumps(timing, indent=1)})


# ---------------------------------------------------------------------------
# evaluation on records


def _load_network(path) -> Network:
    try:
        return load(path)
    except (OSError, EcgDaeError) as exc:
        raise DataError(f"cannot load model {path}: {exc}") from exc


def evaluate_record(model: Network, record: Record, denoiser: Optional[Network] = None,
                    use_annotations: bool = False, batch_size: int = 1024) -> dict:
    """Segment a whole record and classify every beat window in batches,
    logging throughput.  Per-class beat counts come from the segmentation."""
    t0 = time.perf_counter()
    if record.sampling_rate != TARGET_RATE:
        log.warning("record %s sampled at %g Hz; resampling to %g Hz",
                    record.header.record_name, record.sampling_rate, TARGET_RATE)
    rec = resample(record, TARGET_RATE)
    rec.signals = np.vstack([normalize(ch) for ch in rec.signals])
    peaks = rec.beat_indices() if use_annotations else detect_r_peaks(rec)
    windows = segment_beats(rec, peaks)
    x, y, valid = windows_to_arrays(windows)
    pred = np.empty(len(x), dtype=np.int64)
    for start in range(0, len(x), batch_size):
        chunk = x[start : start + batch_size].astype(np.float64)
        if denoiser is not None:
            chunk = denoise(denoiser, chunk)
            chunk[np.arange(WINDOW_LENGTH)[None, :] >= valid[start : start + batch_size, None]] = 0.0
        pred[start : start + len(chunk)] = classify(model, chunk).labels
    elapsed = time.perf_counter() - t0
    duration = rec.n_samples / TARGET_RATE
    cm = M.confusion(y, pred)
    rep = M.classification_report(cm)
    log.info("record %s: %d beats, %.1f s of signal in %.2f s (%.0fx real time)",
             record.header.record_name, len(x), duration, elapsed, duration / max(elapsed, 1e-9))
    return {
        "record": record.header.record_name,
        "beats": {c: int(np.sum(y == i)) for i, c in enumerate(CLASSES)},
        "predicted": {c: int(np.sum(pred == i)) for i, c in enumerate(CLASSES)},
        "confusion": cm,
        "metrics": rep.to_dict(),
        "signal_seconds": duration,
        "wall_seconds": elapsed,
    }


def cmd_evaluate(config: ExperimentConfig, model_path, data, out_dir=None,
                 denoiser: Optional[str] = None) -> dict:
    """Evaluate a classifier on a split directory (test split) or on one or
    more records (a record stem or a directory of ``.hea`` files)."""
    model = _load_network(model_path)
    dpath = denoiser or config["models"]["denoiser"]
    dae = _load_network(dpath) if dpath else None
    if os.path.isdir(data) and os.path.exists(os.path.join(data, "manifest.json")):
        split, arrays, _ = _classifier_inputs(config, data, dpath)
        xt, yt = arrays["test"]
        report, _ = _clf_report(model.name, model, xt, yt)
        report["data"] = _split_hashes(data)
    else:
        stems = _db_stems(data, ()) if os.path.isdir(data) else [data]
        missing = _missing_paths(stems)
        if missing:
            raise DataError("missing records:\n  " + "\n  ".join(missing))
        per_record = [evaluate_record(model, load_record(s), dae, config["data"]["use_annotations"]) for s in stems]
        total = M.ConfusionMatrix()
        for r in per_record:
            c = r["confusion"]
            total = M.ConfusionMatrix(total.tp + c.tp, total.tn + c.tn, total.fp + c.fp, total.fn + c.fn)
        accs = [r["metrics"]["accuracy"] for r in per_record if r["metrics"]["accuracy"] is not None]
        report = {
            "model": model.name,
            "records": per_record,
            "aggregate": {"confusion": total, "metrics": M.classification_report(total).to_dict(),
                          "mean_record_accuracy": float(np.mean(accs)) if accs else None},
            "wall_seconds": sum(r["wall_seconds"] for r in per_record),
            "signal_seconds": sum(r["signal_seconds"] for r in per_record),
        }
    report["model_hash"] = file_hash(model_path)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        _write_text(os.path.join(out_dir, "report.json"), M.report_json(report))
    return report


# ---------------------------------------------------------------------------
# hyperparameter search


def search_points(config: ExperimentConfig) -> list[dict]:
    """Grid over learning rates and widths crossed with seeded uniform
    dropout samples from the configured range."""
    s = config["search"]
    rng = np.random.default_rng(config.seed)
    lo, hi = s["dropout"]
    drops = [float(d) for d in rng.uniform(lo, hi, size=int(s["dropout_samples"]))]
    return [{"lr": float(lr), "dropout": d, "width": float(w)}
            for lr, d, w in itertools.product(s["lr"], drops, s["width"])]


def _width_kwargs(name, width, dropout) -> dict:
    kw = {"dropout": dropout}
    if width == 1.0:
        return kw
    scale = lambda n: max(1, int(round(n * width)))  # noqa: E731
    if name == "CLF-DNN":
        kw["widths"] = tuple(scale(n) for n in (1024, 1024, 512, 128, 64))
    elif name == "CLF-CNN":
        kw["dense"] = (scale(128), scale(32))
    else:
        kw["dense"] = scale(64)
    return kw


def cmd_search(config: ExperimentConfig, data_dir, out_dir, denoiser: Optional[str] = None) -> dict:
    """Train every search point on train, rank by validation accuracy,
    retrain the winner on train + validation and score it once on test."""
    s = config["search"]
    if not s["enabled"]:
        raise ConfigError("search is not enabled in the config")
    name = s["model"]
    config = _with_denoiser(config, denoiser)
    split, arrays, dpath = _classifier_inputs(config, data_dir, None)
    (x, y), (xv, yv), (xt, yt) = arrays["train"], arrays["validation"], arrays["test"]
    extra = {} if s["max_epochs"] is None else {"max_epochs": int(s["max_epochs"])}
    rows = []
    for i, p in enumerate(search_points(config)):
        tc = config.train_config(name, lr=p["lr"], **extra)
        net = build(name, seed=config.seed, train_config=tc, **_width_kwargs(name, p["width"], p["dropout"]))
        try:
            net, hist = train(net, (_shaped(net, x), y), (_shaped(net, xv), yv), tc)
            acc = float(np.mean(classify(net, xv).labels == yv))
            status = "ok"
        except EcgDaeError as exc:  # a diverging point ranks last rather than aborting the search
            acc, hist, status = float("nan"), [], f"fault: {exc}"
        rows.append({"run": i, **p, "val_accuracy": acc, "epochs": len(hist), "status": status})
        log.info("search %d %s -> %.4f", i, p, acc)
    rows.sort(key=lambda r: (-(r["val_accuracy"] if np.isfinite(r["val_accuracy"]) else -1.0), r["run"]))
    best = rows[0]
    tc = config.train_config(name, lr=best["lr"], **extra)
    net = build(name, seed=config.seed, train_config=tc, **_width_kwargs(name, best["width"], best["dropout"]))
    # no held-out set remains, so the winner trains for its full epoch budget
    tc_final = TrainConfig(**{**tc.to_dict(), "patience": None})
    xa, ya = np.concatenate([x, xv]), np.concatenate([y, yv])
    net, hist = train(net, (_shaped(net, xa), ya), (_shaped(net, xv), yv), tc_final)
    report, _ = _clf_report(name, net, xt, yt)
    report.update(best={k: best[k] for k in ("lr", "dropout", "width", "val_accuracy")}, n_runs=len(rows))
    inputs = {"data": _split_hashes(data_dir), "train_sources": _sources(split.train) + _sources(split.validation)}
    art = _finish_run(out_dir, "search", name, config, net, hist, report, inputs,
                      {"leaderboard.csv": M.report_csv(rows)})
    return {"leaderboard": rows, "best": report["best"], "report": report, "artifact": art}


# ---------------------------------------------------------------------------
# comparison report


def cmd_report(run_dirs, out_dir) -> dict:
    """Collect finished runs into comparison tables: DAEs ranked by median
    SNR improvement, classifiers by test accuracy."""
    dae, clf = [], []
    for d in map(os.fspath, run_dirs):
        path = os.path.join(d, "report.json")
        if not os.path.exists(path):
            raise DataError(f"no report.json in {d}")
        with open(path) as fh:
            rep = json.load(fh)
        if "denoise" in rep:
            s = rep["denoise"]
            dae.append({"model": rep["model"], "run": d, "snr_improvement_median": s["snr_improvement"]["median"],
                        "snr_improvement_mean": s["snr_improvement"]["mean"],
                        "snr_improvement_std": s["snr_improvement"]["std"],
                        "psnr_median": s["psnr"]["median"], "prd_median": s["prd"]["median"],
                        "mse_mean": s["mse"]["mean"]})
        elif "metrics" in rep:
            m = rep["metrics"]
            clf.append({"model": rep["model"], "run": d, "accuracy": m["accuracy"], "precision": m["precision"],
                        "recall": m["recall"], "f1": m["f1"], "false_positive_rate": m["false_positive_rate"]})
    dae.sort(key=lambda r: -(r["snr_improvement_median"] or -np.inf))
    clf.sort(key=lambda r: -(r["accuracy"] or -np.inf))
    os.makedirs(out_dir, exist_ok=True)
    if dae:
        _write_text(os.path.join(out_dir, "dae_comparison.csv"), M.report_csv(dae))
    if clf:
        _write_text(os.path.join(out_dir, "clf_comparison.csv"), M.report_csv(clf))
    summary = {"dae": dae, "clf": clf}
    _write_text(os.path.join(out_dir, "comparison.json"), M.report_json(summary))
    return summary
