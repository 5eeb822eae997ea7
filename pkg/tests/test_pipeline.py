import json
import logging

import numpy as np
import pytest

from ecgdae.errors import ConfigError
from ecgdae.models import build
from ecgdae.nn import save
from ecgdae.noise import measured_snr
from ecgdae.pipeline import (
    DataError, ExperimentConfig, cmd_corrupt, cmd_evaluate, cmd_preprocess, cmd_report, cmd_search, cmd_synth,
    cmd_train_clf, cmd_train_dae, evaluate_record, load_records, search_points,
)
from ecgdae.preprocess import load_split, segment_beats
from ecgdae.wfdb import SyntheticEcgSpec, resample, save_record, synthesize_ecg

SMALL = {
    "seed": 3,
    "data": {"synthetic": {"n_records": 4, "duration": 60}},
    "preprocess": {"per_class": 80},
    "train": {"DAE-DNN": {"max_epochs": 2, "lr": 1e-3}, "CLF-DNN": {"max_epochs": 2}},
}


@pytest.fixture(scope="module")
def dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    cfg = ExperimentConfig(SMALL)
    cmd_preprocess(cfg, root / "split")
    cmd_corrupt(cfg, root / "split", root / "noisy")
    return cfg, root


# -- config -------------------------------------------------------------------

def test_default_config_values():
    cfg = ExperimentConfig()
    assert cfg["preprocess"]["per_class"] == 30000
    assert cfg["preprocess"]["window_seconds"] == 1.2
    assert cfg["search"]["lr"] == [1e-2, 1e-3, 1e-4, 1e-5]
    assert cfg.train_config("DAE-CNN").lr == 1e-5 and cfg.train_config("DAE-LSTM").lr == 1e-3


@pytest.mark.parametrize("bad", [
    {"preprocess": {"split": {"train": 0.8, "test": 0.15, "validation": 0.1}}},
    {"search": {"enabled": True, "lr": []}},
    {"search": {"enabled": True, "dropout_samples": 0}},
    {"noise": {"kinds": ["pink"]}},
    {"models": {"dae": ["DAE-GRU"]}},
    {"train": {"CLF-CNN": {"learning_rate": 1}}},
    {"nonsense": 1},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(bad)


def test_config_file_and_seed_override(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 4\npreprocess:\n  per_class: 12\n")
    cfg = ExperimentConfig.from_file(p, seed=9)
    assert cfg.seed == 9 and cfg["preprocess"]["per_class"] == 12
    assert ExperimentConfig.from_file(tmp_path / "c.yaml").seed == 4
    p.write_text("seed: [unclosed\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(p)


# -- preprocess / corrupt -----------------------------------------------------

def test_synthetic_preprocess_split(dirs):
    cfg, root = dirs
    split, noisy, manifest = load_split(root / "split")
    assert split.counts() == {"train": 120, "test": 24, "validation": 16}
    assert noisy == {}
    assert sum(manifest["per_source_counts"][r]["AFib"] for r in manifest["per_source_counts"]) >= 80


def test_preprocess_is_byte_identical_on_rerun(dirs, tmp_path):
    cfg, root = dirs
    cmd_preprocess(ExperimentConfig(SMALL), tmp_path / "again")
    for f in ("train.bin", "test.bin", "validation.bin", "manifest.json"):
        assert (tmp_path / "again" / f).read_bytes() == (root / "split" / f).read_bytes()


def test_missing_records_are_all_listed(tmp_path):
    cfg = ExperimentConfig({"data": {"records": [str(tmp_path / "a"), str(tmp_path / "b")]}})
    with pytest.raises(DataError) as info:
        load_records(cfg)
    assert "a.hea" in str(info.value) and "b.hea" in str(info.value)


def test_records_on_disk_are_used(tmp_path):
    cfg = ExperimentConfig({"data": {"synthetic": {"n_records": 2, "duration": 20}}})
    cmd_synth(cfg, tmp_path)
    recs = load_records(ExperimentConfig({"data": {"afdb_dir": str(tmp_path)}}))
    assert [r.header.record_name for r in recs] == ["synth0000_0000", "synth0000_0001"]


def test_corrupted_test_split_sits_at_eval_snr(dirs):
    cfg, root = dirs
    split, noisy, manifest = load_split(root / "noisy")
    assert set(noisy) == {"train", "test", "validation"}
    for w, row in zip(split.test, noisy["test"]):
        v = w.valid_length
        assert abs(measured_snr(w.samples, row.astype(float) - w.samples, v) + 10) < 0.01
        assert np.all(row[v:] == 0)
    assert set(manifest["noise_plan"]["train"]["snr_db"]) <= {-10.0, -5.0, 0.0, 5.0}


# -- training runs ------------------------------------------------------------

def _test_sources(root):
    return {tuple(s) for s in json.loads((root / "noisy" / "manifest.json").read_text())["splits"]["test"]["sources"]}


def test_train_dae_artifact_and_reproducibility(dirs, tmp_path):
    cfg, root = dirs
    art = cmd_train_dae(cfg, "DAE-DNN", root / "noisy", tmp_path / "a")
    for f in ("config.yaml", "model.bin", "history.csv", "report.json", "manifest.json", "denoise_long.csv"):
        assert (tmp_path / "a" / f).exists()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert not {tuple(s) for s in manifest["inputs"]["train_sources"]} & _test_sources(root)
    # the config snapshot alone reproduces the run
    again = ExperimentConfig.from_file(tmp_path / "a" / "config.yaml")
    cmd_train_dae(again, "DAE-DNN", root / "noisy", tmp_path / "b")
    for f in ("report.json", "model.bin", "history.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert art.report["denoise"]["n"] == 24


def test_lr_fallback_reports_both_runs(dirs, tmp_path):
    cfg, root = dirs
    v = dict(SMALL, lr_fallback=1e-2)
    art = cmd_train_dae(ExperimentConfig(v), "DAE-DNN", root / "noisy", tmp_path)
    assert [r["lr"] for r in art.report["runs"]] == [1e-3, 1e-2]
    assert art.report["chosen_lr"] in (1e-3, 1e-2)


def test_classifier_consumes_denoiser_output(dirs, tmp_path):
    cfg, root = dirs
    dae = build("DAE-DNN", zero_final=True)
    save(dae, tmp_path / "dae.bin")
    art = cmd_train_clf(cfg, "CLF-DNN", root / "noisy", tmp_path / "clf", denoiser=str(tmp_path / "dae.bin"))
    assert art.report["denoiser"] == str(tmp_path / "dae.bin")
    assert art.config["models"]["denoiser"] == str(tmp_path / "dae.bin")
    cm = art.report["confusion"]
    assert cm.tp + cm.tn + cm.fp + cm.fn == 24
    # an all-zero denoiser makes every window identical, so every prediction is the same class
    assert cm.tp + cm.fp in (0, 24)
    manifest = json.loads((tmp_path / "clf" / "manifest.json").read_text())
    assert "denoiser" in manifest["inputs"]


def test_wrong_architecture_kind(dirs, tmp_path):
    cfg, root = dirs
    with pytest.raises(ConfigError):
        cmd_train_dae(cfg, "CLF-CNN", root / "noisy", tmp_path)
    with pytest.raises(DataError):
        cmd_train_dae(cfg, "DAE-DNN", root / "split", tmp_path)  # clean split has no noisy tensors


# -- evaluation ---------------------------------------------------------------

def _signal4(fs=128.0):
    # 234 normal beats at 60 bpm, then an AFib run giving exactly 15 complete windows
    spec = SyntheticEcgSpec(heart_rate=60, duration=245.6, sampling_rate=fs, afib_segments=[(234.0, 245.6)])
    rec = synthesize_ecg(spec)
    rec.header.record_name = "signal4"
    return rec


def test_record_evaluation_counts_beats_and_warns(caplog):
    rec = _signal4()
    clf = build("CLF-DNN", seed=1)
    with caplog.at_level(logging.WARNING):
        rep = evaluate_record(clf, rec, use_annotations=True)
    assert "resampling" in caplog.text
    assert rep["beats"] == {"Normal": 234, "AFib": 15}
    r250 = resample(rec, 250)
    ws = segment_beats(r250, r250.beat_indices())
    assert len(ws) == 249
    assert rep == evaluate_record(clf, rec, use_annotations=True) | {"wall_seconds": rep["wall_seconds"]}


def test_all_normal_record_flags_undefined_recall(tmp_path):
    rec = synthesize_ecg(SyntheticEcgSpec(heart_rate=70, duration=60, rng_seed=2))
    rec.header.record_name = "nsr"
    rec.header.signals[0].file_name = "nsr.dat"
    save_record(rec, tmp_path / "recs")
    clf = build("CLF-DNN", seed=1)
    save(clf, tmp_path / "clf.bin")
    rep = cmd_evaluate(ExperimentConfig(), tmp_path / "clf.bin", str(tmp_path / "recs"), tmp_path / "out")
    m = rep["records"][0]["metrics"]
    assert m["recall"] is None and "recall" in m["undefined"]
    assert m["false_positive_rate"] is not None
    assert rep["records"][0]["beats"]["AFib"] == 0
    assert (tmp_path / "out" / "report.json").exists()


def test_split_evaluation_is_repeatable(dirs, tmp_path):
    cfg, root = dirs
    save(build("CLF-DNN", seed=2), tmp_path / "m.bin")
    a = cmd_evaluate(cfg, tmp_path / "m.bin", str(root / "noisy"))
    b = cmd_evaluate(cfg, tmp_path / "m.bin", str(root / "noisy"))
    assert a == b and a["n_windows"] == 24


# -- search -------------------------------------------------------------------

def _search_cfg(**over):
    s = {"enabled": True, "model": "CLF-DNN", "max_epochs": 1, "dropout_samples": 3}
    s.update(over)
    return ExperimentConfig(dict(SMALL, search=s))


def test_search_space_size():
    pts = search_points(_search_cfg())
    assert len(pts) == 12
    assert {p["lr"] for p in pts} == {1e-2, 1e-3, 1e-4, 1e-5}
    assert all(0.1 <= p["dropout"] <= 0.5 for p in pts)


def test_single_point_search(dirs, tmp_path):
    cfg, root = dirs
    res = cmd_search(_search_cfg(lr=[1e-3], dropout_samples=1), root / "noisy", tmp_path)
    assert len(res["leaderboard"]) == 1
    assert res["best"]["lr"] == 1e-3 and res["best"]["dropout"] == res["leaderboard"][0]["dropout"]
    assert (tmp_path / "leaderboard.csv").read_text().count("\n") == 2


def test_search_ordering_is_seed_determined(dirs, tmp_path):
    cfg, root = dirs
    c = _search_cfg(lr=[1e-2, 1e-3], dropout_samples=2)
    a = cmd_search(c, root / "noisy", tmp_path / "a")["leaderboard"]
    b = cmd_search(c, root / "noisy", tmp_path / "b")["leaderboard"]
    assert a == b
    accs = [r["val_accuracy"] for r in a]
    assert accs == sorted(accs, reverse=True)


def test_search_requires_enabling(dirs, tmp_path):
    cfg, root = dirs
    with pytest.raises(ConfigError):
        cmd_search(cfg, root / "noisy", tmp_path)


# -- report -------------------------------------------------------------------

def test_report_ranks_runs(dirs, tmp_path):
    cfg, root = dirs
    cmd_train_dae(cfg, "DAE-DNN", root / "noisy", tmp_path / "good")
    # a second "run" with a useless model, written through the same artifact path
    v = dict(SMALL, train={"DAE-DNN": {"max_epochs": 1, "lr": 1e-9}})
    cmd_train_dae(ExperimentConfig(v), "DAE-DNN", root / "noisy", tmp_path / "bad")
    out = cmd_report([tmp_path / "bad", tmp_path / "good"], tmp_path / "cmp")
    meds = [r["snr_improvement_median"] for r in out["dae"]]
    assert meds == sorted(meds, reverse=True)
    assert (tmp_path / "cmp" / "dae_comparison.csv").exists()
    with pytest.raises(DataError):
        cmd_report([tmp_path / "nothing"], tmp_path / "cmp")
