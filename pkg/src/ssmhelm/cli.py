"""Command-line pipeline: ingest -> featurize -> label -> train -> evaluate -> report.

Each stage reads the previous stage's files from the configured output
directory and writes its own there::

    frames.ssmc        ingest      cleaned metric frames (truth.ssmc for synthetic input)
    features.ssmc      featurize   per-row kinematics and safety measures
    S1.ssmc ...        featurize   per-setting feature matrices (plus frame, car)
    labels.csv         label       rule labels with triggers and severity
    split.json         label       split manifest
    models/*.json      train       one detector per (model, setting, seed)
    reports/           evaluate    metrics.csv, metrics.json, runs.json, scatter/

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 I/O error.
Log verbosity comes from ``SSMHELM_LOG_LEVEL`` (default INFO).
"""

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .config import load_config
from .errors import InputError, IoError, MissingFeature, NumericalFailure
from .evaluation.experiment import (MODELS, derive_seed, fit_detector, load_detector, make_run,
                                    sample_examined, split_rows)
from .evaluation.report import dumps_runs, export_report, format_table, loads_runs
from .evaluation.synth import SynthSpec, synth_generate, write_citysim_csv
from .features import SETTINGS, assemble, compute_features
from .ingest import FrameTable, load_schema, read_table
from .labeler import DEFAULT_BINS, Labels, SplitSpec, label_table, read_overrides

log = logging.getLogger("ssmhelm")

REFERENCE_COUNTS = {"normal": 12125, "abnormal": 11480, "normal_test": 3638}
FEATURE_KEYS = ("vx", "vy", "ax", "ay", "a_long", "a_lat", "distance", "ttc", "ttc2d",
                "neighbor")


def _read_store(path, stage):
    try:
        return io.read_store(path)
    except FileNotFoundError as exc:
        raise InputError(f"{path} not found; run `ssmhelm {stage}` first") from exc


def _write_text(path, text):
    try:
        io.atomic_write(path, text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _write_store(path, columns):
    try:
        io.write_store(path, columns)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_table(out):
    return FrameTable.from_columns(_read_store(out / "frames.ssmc", "ingest"))


def load_features(out):
    cols = _read_store(out / "features.ssmc", "featurize")
    cols["neighbor"] = cols["neighbor"].astype(np.int64)
    return cols


def load_matrix(out, setting):
    cols = _read_store(out / f"{setting}.ssmc", "featurize")
    names = [n for n in cols if n not in ("frame", "car")]
    if not names:
        raise MissingFeature(f"{setting}.ssmc holds no feature columns")
    return np.column_stack([cols[n] for n in names]), names


def load_split(out):
    path = out / "split.json"
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InputError(f"{path} not found; run `ssmhelm label` first") from exc
    return SplitSpec.from_json(manifest["split"]), manifest


def model_path(out, model, setting, seed):
    return out / "models" / f"{model}_{setting}_seed{seed}.json"


def cmd_ingest(cfg, args):
    out = cfg.out
    if cfg.input.csv is not None:
        schema = load_schema(cfg.path(cfg.input.schema)) if cfg.input.schema else None
        table, summary = read_table(cfg.path(cfg.input.csv), cfg.input.fps, schema)
        log.info("ingest: %s", summary)
    else:
        spec = cfg.synth_spec()
        result = synth_generate(spec, cfg.synth_seed())
        table = result.table
        _write_store(out / "truth.ssmc", result.truth)
        log.info("ingest: synthetic scene %s with %d events", spec.version, len(result.events))
    _write_store(out / "frames.ssmc", table.columns())
    saved = cfg.to_dict()
    saved.pop("output_dir")
    _write_text(out / "config.json", json.dumps(saved, sort_keys=True, indent=1) + "\n")
    print(f"ingest: {len(table)} frames from {len(np.unique(table.car))} vehicles -> {out}")


def cmd_featurize(cfg, args):
    out = cfg.out
    f = cfg.features
    table = load_table(out)
    feats = compute_features(table, window=f.window, radius=f.radius,
                             subtract_half_lengths=f.subtract_half_lengths)
    _write_store(out / "features.ssmc", {k: feats[k] for k in FEATURE_KEYS})
    for setting in SETTINGS:
        m = assemble(table, feats, setting, cap=f.cap, ttc_encoding=f.ttc_encoding)
        cols = {"frame": m.frame, "car": m.car}
        cols.update({n: m.values[:, j] for j, n in enumerate(m.names)})
        _write_store(out / f"{setting}.ssmc", cols)
        if f.export_csv:
            lines = [",".join(cols)]
            lines += [",".join(repr(float(v)) if k not in ("frame", "car") else str(int(v))
                               for k, v in zip(cols, row))
                      for row in zip(*cols.values())]
            _write_text(out / f"{setting}.csv", "\n".join(lines) + "\n")
        print(f"featurize: {setting} {m.shape[0]} x {m.shape[1]} ({', '.join(m.names)})")


def cmd_label(cfg, args):
    out = cfg.out
    lab, sp = cfg.labels, cfg.split
    table = load_table(out)
    feats = load_features(out)
    bins = DEFAULT_BINS if lab.bins is None else np.asarray(lab.bins, dtype=float)
    labels = label_table(table, feats, fraction=lab.fraction, bins=bins,
                         accel_floor=lab.accel_floor, lat_threshold=lab.lat_threshold,
                         severe=lab.severe, weak=lab.weak, lane_window=lab.lane_window)
    if lab.overrides is not None:
        labels = labels.apply_overrides(read_overrides(cfg.path(lab.overrides)))
    abnormal = np.asarray(labels.abnormal, dtype=bool)
    n_abn = int(abnormal.sum())
    if n_abn == 0:
        raise InputError("no abnormal rows were labeled; nothing to test against")
    rows = None
    if sp.normal_ratio is not None:
        rows = sample_examined(abnormal, sp.normal_ratio, cfg.sample_seed())
    n_test = (int(sp.normal_test_count) if sp.normal_test_count is not None
              else int(round(sp.test_ratio * n_abn)))
    split = split_rows(abnormal, n_test, cfg.split_seed(), sp.valid_fraction, rows)

    n_examined = len(abnormal) if rows is None else len(rows)
    counts = {"rows": len(abnormal), "examined": n_examined, "abnormal": n_abn,
              "normal": n_examined - n_abn, "train_normal": int(split.train_normal.size),
              "valid_normal": int(split.valid_normal.size),
              "normal_test": int(split.test_normal.size),
              "test_abnormal": int(split.test_abnormal.size)}
    log.info("label: normal %d (reference %d), abnormal %d (reference %d), "
             "normal test %d (reference %d)", counts["normal"], REFERENCE_COUNTS["normal"],
             n_abn, REFERENCE_COUNTS["abnormal"], counts["normal_test"], REFERENCE_COUNTS["normal_test"])
    tmp = out / ".labels.csv.tmp"
    try:
        labels.to_csv(tmp)
        os.replace(tmp, out / "labels.csv")
    except OSError as exc:
        raise IoError(f"cannot write labels: {exc}") from exc
    manifest = {"counts": counts, "split": split.to_json()}
    _write_text(out / "split.json", json.dumps(manifest, sort_keys=True) + "\n")
    print("label: " + ", ".join(f"{k}={v}" for k, v in counts.items()))


def _selection(cfg, args):
    models = args.model or cfg.models
    settings = args.setting or cfg.settings
    return models, settings


def cmd_train(cfg, args):
    out = cfg.out
    split, _ = load_split(out)
    models, settings = _selection(cfg, args)
    for setting in settings:
        X, _ = load_matrix(out, setting)
        for model in models:
            seed = derive_seed(cfg.seed, model, setting)
            start = time.perf_counter()
            _, threshold, fitted = fit_detector(
                model, X[split.train_normal], X[split.valid_normal], seed, cfg.helm,
                cfg.baseline, split.train_normal, split.valid_normal)
            path = model_path(out, model, setting, seed)
            _write_text(path, fitted.dumps())
            log.info("train: %s %s in %.1fs", model, setting, time.perf_counter() - start)
            print(f"train: {model} {setting} seed={seed} threshold={threshold:.6g} -> {path.name}")


def cmd_evaluate(cfg, args):
    out = cfg.out
    split, _ = load_split(out)
    labels_path = out / "labels.csv"
    if not labels_path.is_file():
        raise InputError(f"{labels_path} not found; run `ssmhelm label` first")
    abnormal = np.asarray(Labels.from_csv(labels_path).abnormal, dtype=bool)
    test = split.test
    models, settings = _selection(cfg, args)
    runs, missing = [], []
    for model in models:
        for setting in settings:
            seed = derive_seed(cfg.seed, model, setting)
            path = model_path(out, model, setting, seed)
            if not path.is_file():
                missing.append(f"{model}/{setting}")
                continue
            scorer, threshold, _ = load_detector(model, path.read_text(encoding="utf-8"))
            X, _ = load_matrix(out, setting)
            runs.append(make_run(model, setting, seed, scorer(X[test]), threshold,
                                 abnormal[test], test))
    if not runs:
        raise InputError("no trained models found; run `ssmhelm train` first")
    if missing:
        log.warning("evaluate: no model file for %s; evaluating the %d available runs",
                    ", ".join(missing), len(runs))
    reports = out / "reports"
    _write_text(reports / "runs.json", dumps_runs(runs))
    export_report(runs, reports, svg=cfg.report.svg)
    print(format_table(runs))


def cmd_report(cfg, args):
    reports = cfg.out / "reports"
    path = reports / "runs.json"
    try:
        runs = loads_runs(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InputError(f"{path} not found; run `ssmhelm evaluate` first") from exc
    written = export_report(runs, reports, svg=cfg.report.svg or args.svg)
    print(format_table(runs))
    print(f"report: {len(written)} files in {reports}")


def _plain(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def cmd_synth(cfg, args):
    spec = cfg.synth_spec() if cfg.input.synth is not None else SynthSpec()
    seed = cfg.synth_seed() if args.seed is None else args.seed
    result = synth_generate(spec, seed)
    target = Path(args.csv)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        write_citysim_csv(result.table, target)
    except OSError as exc:
        raise IoError(f"cannot write {target}: {exc}") from exc
    events = {"spec": spec.to_dict(), "seed": seed, "events": result.events}
    _write_text(target.with_suffix(".events.json"),
                json.dumps(events, sort_keys=True, indent=1, default=_plain) + "\n")
    print(f"synth: {len(result.table)} frames, {len(result.events)} events -> {target}")


COMMANDS = {"ingest": cmd_ingest, "featurize": cmd_featurize, "label": cmd_label,
            "train": cmd_train, "evaluate": cmd_evaluate, "synth": cmd_synth,
            "report": cmd_report}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="JSON pipeline config")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set labels.accel_floor=2.0")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="master seed (overrides seed)")

    parser = argparse.ArgumentParser(prog="ssmhelm", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("ingest", parents=[common], help="load a trajectory CSV or synthesize one")
    p.add_argument("--input", help="CitySim-style CSV (overrides input.csv)")
    sub.add_parser("featurize", parents=[common], help="compute features and setting matrices")
    sub.add_parser("label", parents=[common], help="rule labels and the train/valid/test split")
    for name, text in (("train", "fit detectors"), ("evaluate", "score the test split")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--model", action="append", choices=list(MODELS))
        p.add_argument("--setting", action="append", choices=list(SETTINGS))
    p = sub.add_parser("synth", parents=[common], help="write a synthetic CitySim-style CSV")
    p.add_argument("csv", help="output CSV path")
    p = sub.add_parser("report", parents=[common], help="re-export reports from runs.json")
    p.add_argument("--svg", action="store_true", help="also write SVG scatter plots")
    return parser


def _overrides(args):
    items = list(args.set)
    if args.out is not None:
        items.append(f"output_dir={json.dumps(str(Path(args.out).resolve()))}")
    if args.command != "synth" and args.seed is not None:
        items.append(f"seed={args.seed}")
    if getattr(args, "input", None):
        items.append(f"input.csv={json.dumps(str(Path(args.input).resolve()))}")
        items.append("input.synth=null")
    return items


def _setup_logging():
    level = os.environ.get("SSMHELM_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args), need_input=args.command != "synth")
        COMMANDS[args.command](cfg, args)
    except (InputError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return 2
    except (NumericalFailure, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return 3
    except (IoError, OSError) as exc:
        log.error("I/O error: %s", exc)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
