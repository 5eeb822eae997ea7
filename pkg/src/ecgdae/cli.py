"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training fault.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import metrics as M
from .errors import (
    ClassShortage, ConfigError, DivergenceFault, EcgDaeError, InsufficientSignal, LengthError, ParseError,
    SpecError, TruncationError, UnsupportedFormat, VersionError, ZeroPowerError,
)
from .pipeline import (
    DataError, ExperimentConfig, cmd_corrupt, cmd_evaluate, cmd_preprocess, cmd_report, cmd_search, cmd_synth,
    cmd_train_clf, cmd_train_dae,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAIN = 0, 2, 3, 4
DATA_ERRORS = (DataError, ParseError, TruncationError, UnsupportedFormat, VersionError, ClassShortage,
               InsufficientSignal, LengthError, ZeroPowerError, FileNotFoundError)

log = logging.getLogger("ecgdae")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecgdae", description="ECG denoising and AFib classification experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help, data=False, model=False, out=True):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", help="YAML experiment config")
        sp.add_argument("--seed", type=int, help="override the config seed")
        if out:
            sp.add_argument("--out", required=True, help="output directory")
        if data:
            sp.add_argument("--data", required=True, help="split directory (or record path for evaluate)")
        if model:
            sp.add_argument("--model", required=True, help="model file")
        return sp

    add("synth", "write synthetic WFDB records")
    add("preprocess", "build train/test/validation beat splits")
    add("corrupt", "add calibrated noise to a split directory", data=True)
    sp = add("train-dae", "train a denoising autoencoder", data=True)
    sp.add_argument("spec", help="DAE-CNN, DAE-DNN or DAE-LSTM")
    sp = add("train-clf", "train a beat classifier", data=True)
    sp.add_argument("spec", help="CLF-DNN, CLF-CNN or CLF-RNN")
    sp.add_argument("--denoiser", help="DAE model whose output the classifier consumes")
    sp = add("evaluate", "evaluate a classifier on a split or on records", data=True, model=True, out=False)
    sp.add_argument("--out", help="write report.json here")
    sp.add_argument("--denoiser", help="DAE model applied before classification")
    sp = add("search", "hyperparameter search for a classifier", data=True)
    sp.add_argument("--denoiser", help="DAE model applied before classification")
    sp = add("report", "compare finished runs")
    sp.add_argument("runs", nargs="+", help="run directories")
    return p


def _run(args) -> int:
    config = ExperimentConfig.from_file(args.config, args.seed) if args.config else \
        ExperimentConfig({} if args.seed is None else {"seed": args.seed})
    c = args.command
    if c == "synth":
        cmd_synth(config, args.out)
    elif c == "preprocess":
        cmd_preprocess(config, args.out)
    elif c == "corrupt":
        cmd_corrupt(config, args.data, args.out)
    elif c == "train-dae":
        art = cmd_train_dae(config, args.spec, args.data, args.out)
        print(json.dumps({"run_id": art.run_id, "snr_improvement": art.report["denoise"]["snr_improvement"]}))
    elif c == "train-clf":
        art = cmd_train_clf(config, args.spec, args.data, args.out, denoiser=args.denoiser)
        print(json.dumps({"run_id": art.run_id, "metrics": art.report["metrics"]}))
    elif c == "evaluate":
        rep = cmd_evaluate(config, args.model, args.data, args.out, denoiser=args.denoiser)
        print(M.report_json(rep.get("aggregate", rep.get("metrics"))))
    elif c == "search":
        res = cmd_search(config, args.data, args.out, denoiser=args.denoiser)
        print(json.dumps({"best": res["best"], "runs": len(res["leaderboard"])}))
    elif c == "report":
        cmd_report(args.runs, args.out)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigError, SpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceFault as exc:
        print(f"training fault in {args.command}: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EcgDaeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
