"""Command-line entry point: ``coinn {preprocess,predict,train,sweep,evaluate,analyze}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical divergence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import build_feature_table, correlation_matrix
from .ann import TrainedModel, TrainingError, mre, train_multistart
from .ann.training import FeatureMismatch
from .config import ConfigError, RunConfig, load_config, parse_config
from .correlations import KINDS, CorrelationError, evaluate_correlation
from .datamodel import (
    CSV_COLUMNS, DataError, Dataset, bin_by_quality, load_dataset, make_split, point_from_fields,
    write_dataset,
)
from .experiment import InputSetSpec, assemble_inputs, evaluate_model, run_sweep

log = logging.getLogger("coinn")

EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 2, 3, 4
DEFAULT_BINS = 50


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: RunConfig | None, inputs: dict, outputs: list, **extra):
    manifest = {
        "command": command,
        "config_digest": None if cfg is None else cfg.digest(),
        "config": None if cfg is None else cfg.source,
        "seed": None if cfg is None else cfg.seed,
        "versions": {"coinn": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "rng": "numpy.random.PCG64 / SeedSequence",
        "inputs": {k: {"path": str(v), "sha256": file_digest(v)} for k, v in inputs.items()},
        "outputs": sorted(outputs),
        **extra,
    }
    path = out / f"{command}_manifest.json"
    path.write_text(json.dumps(manifest, indent=1, default=str) + "\n")
    return path


def _dataset(cfg: RunConfig) -> Dataset:
    if cfg.dataset is None:
        raise ConfigError("config has no dataset.path")
    ds = load_dataset(cfg.dataset, cfg.schema)
    return ds if cfg.n_bins is None else bin_by_quality(ds, cfg.n_bins)


def _emit(args, summary: dict, text: str) -> None:
    if args.json:
        print(json.dumps(summary, default=str))
    else:
        print(text)


def _save(report, out: Path, stem: str, formats) -> list[str]:
    written = []
    if "csv" in formats:
        report.to_csv(out / f"{stem}.csv")
        written.append(f"{stem}.csv")
    if "json" in formats:
        report.to_json(out / f"{stem}.json")
        written.append(f"{stem}.json")
    return written


# --------------------------------------------------------------------------
# subcommands

def cmd_preprocess(args, cfg: RunConfig) -> dict:
    if cfg.dataset is None:
        raise ConfigError("config has no dataset.path")
    n_bins = args.bins or cfg.n_bins or DEFAULT_BINS
    raw = load_dataset(cfg.dataset, cfg.schema)
    binned = bin_by_quality(raw, n_bins)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    target = out / "preprocessed.csv"
    write_dataset(binned, target)
    bins = [
        {"experiment_id": p.experiment_id, "x": p.fluid.x, "n_raw": p.n_raw, "dpdz_std": p.dpdz_std}
        for p in binned
    ]
    write_manifest(out, "preprocess", cfg, {"dataset": cfg.dataset}, ["preprocessed.csv"],
                   n_bins=n_bins, n_input_points=len(raw), n_output_points=len(binned), bins=bins)
    summary = {"input_points": len(raw), "output_points": len(binned), "n_bins": n_bins, "output": str(target)}
    _emit(args, summary, f"{len(raw)} points -> {len(binned)} points ({n_bins} quality bins), wrote {target}")
    return summary


def _parse_point(pairs) -> dict:
    fields = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--point expects key=value, got {item!r}")
        fields[key] = value
    fields.setdefault("experiment_id", "point")
    missing = [c for c in CSV_COLUMNS if c not in fields and c != "dpdz_Pa_m"]
    if missing:
        raise ConfigError(f"--point is missing field(s): {', '.join(missing)}")
    return fields


def cmd_predict(args, cfg: RunConfig) -> dict:
    if args.csv:
        ds = load_dataset(args.csv, cfg.schema, require_target=False)
    elif args.point:
        ds = Dataset((point_from_fields(_parse_point(args.point)),))
    else:
        raise ConfigError("predict needs --csv PATH or --point key=value ...")

    choice = cfg.correlation if args.correlation is None else replace(cfg.correlation, kind=args.correlation)
    model_path = None if args.correlation else (args.model or cfg.model_path)
    rows = []
    errors = []
    if model_path is not None:
        model = TrainedModel.load(model_path)
        spec = InputSetSpec("model", model.feature_names)
        preds = []
        for i, p in enumerate(ds, start=1):
            try:
                x, _ = assemble_inputs(spec, Dataset((p,)), choice.literal_mode, choice.laminar_re)
                preds.append(model.predict(x[0], spec.features))
            except CorrelationError as exc:
                errors.append(f"row {i}: {exc}")
                preds.append(float("nan"))
        source = str(model_path)
    else:
        preds = []
        for i, p in enumerate(ds, start=1):
            try:
                preds.append(evaluate_correlation(choice, p)[0])
            except CorrelationError as exc:
                errors.append(f"row {i}: {exc}")
                preds.append(float("nan"))
        source = choice.kind
    for i, (p, y) in enumerate(zip(ds, preds)):
        row = {"experiment_id": p.experiment_id, "x": p.fluid.x, "dpdz_pred": float(y)}
        if args.breakdown:
            try:
                bd = evaluate_correlation(choice, p)[1].as_dict()
                row.update({f"{choice.kind}.{k}": v for k, v in bd.items()})
            except CorrelationError:
                pass
        rows.append(row)
    for e in errors:
        log.error(e)

    summary = {"source": source, "n": len(rows)}
    if args.point:
        summary["prediction"] = rows[0]
        _emit(args, summary, f"{rows[0]['dpdz_pred']!r}")
    else:
        out = cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        header = list(dict.fromkeys(k for r in rows for k in r))
        with (out / "predictions.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        summary["output"] = str(out / "predictions.csv")
        _emit(args, summary, f"wrote {len(rows)} predictions ({source}) to {out / 'predictions.csv'}")
    if errors:
        summary["errors"] = errors
    return summary


def cmd_train(args, cfg: RunConfig) -> dict:
    ds = _dataset(cfg)
    spec = cfg.input_set(args.input_set)
    names = spec.resolve(ds)
    split = make_split(ds, cfg.holdout_ids, cfg.fractions, cfg.seed)
    x, y = assemble_inputs(spec, ds, cfg.correlation.literal_mode, cfg.correlation.laminar_re)
    tr, va = list(split.train), list(split.validation)
    n_hidden = args.n_hidden or cfg.n_hidden
    log.info("training %s with %d hidden neurons, %d restarts", spec.name, n_hidden, cfg.train.n_restarts)
    model = train_multistart((x[tr], y[tr]), (x[va], y[va]), cfg.train, n_hidden, names, n_jobs=args.threads)

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.json")
    split.save(out / "split.json")
    with (out / "restarts.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(model.history[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(model.history)
    scores = {}
    for name, idx in (("train", split.train), ("validation", split.validation),
                      ("test", split.test), ("holdout", split.holdout)):
        if idx:
            scores[name] = mre(y[list(idx)], model.predict(x[list(idx)]))
    (out / "train_report.json").write_text(json.dumps(
        {"input_set": spec.name, "features": list(names), "n_hidden": n_hidden,
         "chosen_restart": model.chosen_restart, "mre": scores}, indent=1) + "\n")
    outputs = ["model.json", "split.json", "restarts.csv", "train_report.json"]
    write_manifest(out, "train", cfg, {"dataset": cfg.dataset}, outputs)
    summary = {"model": str(out / "model.json"), "chosen_restart": model.chosen_restart, "mre": scores}
    _emit(args, summary, "\n".join([f"model written to {out / 'model.json'} (restart {model.chosen_restart})"]
                                   + [f"  mre {k:<10s} {v:7.3f} %" for k, v in scores.items()]))
    return summary


def cmd_sweep(args, cfg: RunConfig) -> dict:
    ds = _dataset(cfg)
    specs = cfg.input_sets if not args.input_set else tuple(cfg.input_set(n) for n in args.input_set)
    report = run_sweep(ds, specs, cfg.n_hidden_range, cfg.train, cfg.holdout_ids, cfg.fractions,
                       n_jobs=args.threads, literal_mode=cfg.correlation.literal_mode,
                       laminar_re=cfg.correlation.laminar_re)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    written = _save(report, out, "sweep", cfg.formats)
    write_manifest(out, "sweep", cfg, {"dataset": cfg.dataset}, written)
    failed = [c for c in report.cells if c.error]
    best = report.chosen
    summary = {"cells": len(report.cells), "failed": len(failed), "outputs": written,
               "chosen": None if best is None else {"input_set": best.input_set, "n_hidden": best.n_hidden,
                                                   "mre_avg": best.mre_avg}}
    lines = [f"{c.input_set:>14s} h={c.n_hidden:<3d} mre_avg={c.mre_avg:8.3f} %" for c in report.cells]
    _emit(args, summary, "\n".join(lines))
    return summary


def cmd_evaluate(args, cfg: RunConfig) -> dict:
    path = args.model or cfg.model_path or cfg.output_dir / "model.json"
    model = TrainedModel.load(path)
    ds = _dataset(cfg)
    report = evaluate_model(model, ds, cfg.correlation, cfg.holdout_ids)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    written = _save(report, out, "evaluation", cfg.formats)
    write_manifest(out, "evaluate", cfg, {"dataset": cfg.dataset, "model": Path(path)}, written)
    summary = {"global_mre_model": report.global_mre_model,
               "global_mre_reference": report.global_mre_reference, "outputs": written}
    lines = [f"{r.experiment_id:>10s}{'*' if r.holdout else ' '} model {r.mre_model:7.3f} %  "
             f"{report.reference} {r.mre_reference:7.3f} %" for r in report.rows]
    lines.append(f"{'average':>11s} model {report.global_mre_model:7.3f} %  "
                 f"{report.reference} {report.global_mre_reference:7.3f} %")
    _emit(args, summary, "\n".join(lines))
    return summary


def cmd_analyze(args, cfg: RunConfig) -> dict:
    ds = _dataset(cfg)
    table = build_feature_table(ds, cfg.analysis_columns, cfg.correlation.literal_mode,
                                cfg.correlation.laminar_re)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    written = []
    summary = {}
    for method in ("pearson", "spearman"):
        cm = correlation_matrix(table, method)
        written += _save(cm, out, f"{method}_matrix", cfg.formats)
        if "dpdz_exp" in cm.names:
            summary[method] = {n: cm[(n, "dpdz_exp")] for n in cm.names if n != "dpdz_exp"}
    write_manifest(out, "analyze", cfg, {"dataset": cfg.dataset}, written)
    summary["outputs"] = written
    text = "\n".join(
        f"{n:>14s}  pearson {summary['pearson'][n]:+.3f}  spearman {summary['spearman'][n]:+.3f}"
        for n in summary.get("pearson", {})
    ) or "wrote " + ", ".join(written)
    _emit(args, summary, text)
    return summary


COMMANDS = {
    "preprocess": cmd_preprocess,
    "predict": cmd_predict,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
    common.add_argument("--threads", type=int, default=1, help="worker processes for restarts")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="coinn", description="Two-phase pressure drop with correlation-informed neural networks.", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("preprocess", parents=[common], help="average raw points into quality bins")
    p.add_argument("--bins", type=int, help="number of quality bins (default: config or 50)")
    p = sub.add_parser("predict", parents=[common], help="pressure gradient from a model or a correlation")
    p.add_argument("--model", type=Path)
    p.add_argument("--correlation", choices=KINDS)
    p.add_argument("--csv", type=Path)
    p.add_argument("--point", nargs="+", metavar="KEY=VALUE")
    p.add_argument("--breakdown", action="store_true")
    p = sub.add_parser("train", parents=[common], help="multi-start training of one network")
    p.add_argument("--input-set")
    p.add_argument("--n-hidden", type=int)
    p = sub.add_parser("sweep", parents=[common], help="hidden-neuron sweep over input sets")
    p.add_argument("--input-set", action="append")
    p = sub.add_parser("evaluate", parents=[common], help="per-experiment mre of model and correlation")
    p.add_argument("--model", type=Path)
    sub.add_parser("analyze", parents=[common], help="Pearson and Spearman feature matrices")
    return parser


def _config(args) -> RunConfig:
    if args.config is not None:
        return load_config(args.config, args.seed, args.out)
    if args.command != "predict":
        raise ConfigError(f"{args.command} requires --config")
    out = str(Path(args.out or ".").resolve())
    return parse_config({"version": 1, "seed": args.seed or 0, "output_dir": out})


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except TrainingError as exc:
        log.error("numerical divergence: %s", exc)
        return EXIT_DIVERGED
    except (DataError, CorrelationError, FeatureMismatch, FileNotFoundError, KeyError, ValueError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
