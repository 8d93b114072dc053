"""Command-line entry point: ``tsan <command> [options]``.

Exit codes: 0 success, 1 configuration or contract error, 2 I/O error
(missing or malformed input files).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shutil
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, container
from .config import RunConfig
from .data import (
    FeatureSchema,
    ScalerStats,
    SplitSpec,
    build_windows,
    encode_records,
    load_dataset,
    parse_records,
    preprocess,
    save_dataset,
    synth_generate,
    write_records,
)
from .data.nslkdd import binary_label
from .data.pipeline import TRAFFIC_FEATURE
from .errors import DataFormatError, TSANError
from .metrics import evaluate_scores, measure_timing, write_report, write_roc_csv
from .model import TSAN, build_model, threshold_decision
from .pretrain import load_pretrained, pretrain, save_pretrained, transfer_weights
from .trainer import (
    ABLATION_VARIANTS,
    ablation_table,
    evaluate,
    fit,
    gradcheck,
    prepare,
    train,
    variant_configs,
    write_history,
)

logger = logging.getLogger("tsan")

DATA_FILES = {"train": "train.tsan", "validation": "validation.tsan", "test": "test.tsan", "rows": "rows.tsan"}
SCHEMA_FILE = "schema.json"


def version_string() -> str:
    """``git describe``-style version, falling back to the package version."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(args, cfg: RunConfig | None = None) -> Path:
    out = Path(args.out or (cfg.output.dir if cfg else "runs"))
    out.mkdir(parents=True, exist_ok=True)
    args.resolved_out = out
    return out


def _load_config(args) -> RunConfig:
    return RunConfig.load(args.config).with_seed(args.seed)


def _load_schema(path) -> tuple[FeatureSchema, ScalerStats, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    return FeatureSchema.from_dict(doc["schema"]), ScalerStats.from_dict(doc["scaler"]), doc


def _data_dir(args) -> Path:
    if not args.data:
        raise TSANError("--data DIR is required (the output directory of `tsan preprocess`)")
    return Path(args.data)


def _load_split(data_dir: Path, name: str):
    path = data_dir / DATA_FILES[name]
    return load_dataset(path) if path.exists() else None


# ---------------------------------------------------------------------------
# commands


def cmd_synth_data(args) -> dict:
    records = synth_generate(args.n, args.dos_fraction, seed=args.seed or 0)
    out = Path(args.out or "synthetic.txt")
    out.parent.mkdir(parents=True, exist_ok=True)
    args.resolved_out = out.parent
    write_records(out, records)
    return {"path": str(out), "records": len(records)}


def cmd_preprocess(args) -> dict:
    cfg = _load_config(args)
    d = cfg.data
    for p in (d.train_path, d.test_path):
        if not os.path.exists(p):
            raise FileNotFoundError(f"{p} not found; create synthetic data with `tsan synth-data` "
                                    "or point data.train_path / data.test_path at the NSL-KDD files")
    pp = preprocess(parse_records(d.train_path), parse_records(d.test_path), d.window_size, d.stride,
                    SplitSpec(d.validation_fraction, True, d.seed))
    out = _out_dir(args, cfg)
    save_dataset(out / DATA_FILES["train"], pp.train)
    save_dataset(out / DATA_FILES["validation"], pp.validation)
    save_dataset(out / DATA_FILES["test"], pp.test)
    container.save(out / DATA_FILES["rows"], {"rows": pp.train_rows}, {"kind": "encoded_rows"})
    _write_json(out / SCHEMA_FILE, {"schema": pp.schema.to_dict(), "scaler": pp.scaler.to_dict(),
                                    "window": d.window_size, "stride": d.stride})
    _write_json(out / "summary.json", pp.summary)
    print(json.dumps(pp.summary, indent=2))
    return pp.summary


def _model_for(cfg: RunConfig, data_dir: Path, model_cfg=None) -> TSAN:
    train_ds = _load_split(data_dir, "train")
    _, _, doc = _load_schema(data_dir / SCHEMA_FILE)
    n_protocol = len(doc["schema"]["protocol_vocab"])
    return build_model(model_cfg or cfg.model, width=train_ds.width, n_protocol=n_protocol, seed=cfg.seed)


def _rows(data_dir: Path) -> np.ndarray:
    entries, _ = container.load(data_dir / DATA_FILES["rows"])
    return entries["rows"]


def cmd_pretrain(args) -> dict:
    cfg = _load_config(args)
    data_dir = _data_dir(args)
    model = _model_for(cfg, data_dir)
    result = pretrain(model, _load_split(data_dir, "train"), _rows(data_dir), cfg.pretrain, cfg.seed)
    out = _out_dir(args, cfg)
    size = save_pretrained(out / "pretrained.tsan", result, model)
    return {"entries": len(result.state), "bytes": size, "history": result.history}


def cmd_train(args) -> dict:
    cfg = _load_config(args)
    data_dir = _data_dir(args)
    model = _model_for(cfg, data_dir)
    manifest = []
    if args.from_pretrained:
        manifest = transfer_weights(load_pretrained(args.from_pretrained), model)
    n_protocol = model.config.n_protocol
    train_set = prepare(_load_split(data_dir, "train"), n_protocol, cfg.train.shuffle_fraction, cfg.seed)
    val_ds = _load_split(data_dir, "validation")
    val_set = prepare(val_ds, n_protocol, 0.0, cfg.seed) if val_ds is not None else None
    result = train(model, train_set, val_set, cfg.train, cfg.seed)
    out = _out_dir(args, cfg)
    model.save(out / "model.tsan", {"best_epoch": result.best_epoch})
    _write_json(out / "train_summary.json", {"train_seconds": result.train_seconds,
                                            "best_epoch": result.best_epoch,
                                            "best_val_accuracy": result.best_val_accuracy})
    write_history(out / "history.csv", result.history)
    shutil.copyfile(data_dir / SCHEMA_FILE, out / SCHEMA_FILE)
    return {"best_epoch": result.best_epoch, "best_val_accuracy": result.best_val_accuracy,
            "transferred": len(manifest), "epochs_run": len(result.history)}


def _dataset_arg(path: str):
    p = Path(path)
    return load_dataset(p / DATA_FILES["test"] if p.is_dir() else p)


def _read_scores(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return (np.asarray([float(r["score"]) for r in rows]), np.asarray([int(r["label"]) for r in rows]))
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{path}: expected score,label columns ({exc})") from None


def cmd_evaluate(args) -> dict:
    if args.scores:
        # precomputed scores: metrics only, no model involved
        scores, labels = _read_scores(args.scores)
        report = evaluate_scores(scores, labels, args.threshold if args.threshold is not None else 0.5)
        out = _out_dir(args)
        write_report(out / "metrics.json", report)
        write_roc_csv(out / "roc.csv", report.roc_points)
        print(json.dumps(report.summary_row(), indent=2))
        return report.summary_row()
    if not args.checkpoint or not args.data:
        raise TSANError("evaluate needs --checkpoint PATH and --data PATH (or --scores CSV)")
    model = TSAN.load(args.checkpoint)
    ds = _dataset_arg(args.data)
    model.check_input_width(ds.width, ds.window)
    theta = args.threshold if args.threshold is not None else model.config.threshold
    report = evaluate(model, ds, theta)
    timing = measure_timing(model, ds.x_temporal, ds.x_spatial, repetitions=3, checkpoint_path=args.checkpoint)
    summary_path = Path(args.checkpoint).parent / "train_summary.json"
    if summary_path.exists():
        with open(summary_path) as fh:
            timing.train_seconds = json.load(fh).get("train_seconds")
    report.timing = timing
    out = _out_dir(args)
    write_report(out / "metrics.json", report)
    write_roc_csv(out / "roc.csv", report.roc_points)
    print(json.dumps(report.summary_row(), indent=2))
    return report.summary_row()


def cmd_ablate(args) -> dict:
    cfg = _load_config(args)
    data_dir = _data_dir(args)
    variants = [args.variant] if args.variant else list(ABLATION_VARIANTS)
    for v in variants:
        variant_configs(v, cfg.model, cfg.train, cfg.pretrain)
    train_ds = _load_split(data_dir, "train")
    val_ds = _load_split(data_dir, "validation")
    test_ds = _load_split(data_dir, "test")
    rows = _rows(data_dir)
    base_model = _model_for(cfg, data_dir).config
    reports = {}
    for v in variants:
        m, t, p = variant_configs(v, base_model, cfg.train, cfg.pretrain)
        reports[v] = fit(m, train_ds, val_ds, rows, t, p, cfg.seed, test_ds).report
        logger.info("%s: %s", v, reports[v].summary_row())
    table = ablation_table(reports)
    out = _out_dir(args, cfg)
    _write_json(out / "ablation.json", {"rows": table, "reports": {v: r.to_dict() for v, r in reports.items()}})
    with open(out / "ablation.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(table[0]))
        writer.writeheader()
        writer.writerows(table)
    for row in table:
        print(f"{row['label']:<40} acc={row['accuracy']:.3f} f1={row['f1']:.3f} auc={row['auc_roc']}")
    return {"rows": table}


def _raw_windows(path: str, schema: FeatureSchema, scaler: ScalerStats, window: int, stride: int):
    records = parse_records(path)
    rows = encode_records(records, schema, scaler)
    labels = np.asarray([binary_label(r.label) if binary_label(r.label) is not None else -1
                         for r in records])
    protocol = np.asarray([schema.protocol_index(r.protocol_type) for r in records])
    return build_windows(rows, labels, window, stride, protocol_index=protocol,
                         traffic_column=schema.column(TRAFFIC_FEATURE))


def cmd_predict(args) -> dict:
    if not args.checkpoint or not args.input:
        raise TSANError("predict needs --checkpoint PATH and --input PATH")
    model = TSAN.load(args.checkpoint)
    try:
        ds = load_dataset(args.input)
    except DataFormatError:
        schema_path = Path(args.schema) if args.schema else Path(args.checkpoint).parent / SCHEMA_FILE
        schema, scaler, doc = _load_schema(schema_path)
        ds = _raw_windows(args.input, schema, scaler, doc["window"], doc["stride"])
    model.check_input_width(ds.width, ds.window)
    theta = args.threshold if args.threshold is not None else model.config.threshold
    scores = model.predict_proba(ds.x_temporal, ds.x_spatial)
    decisions = threshold_decision(scores, theta)
    out = _out_dir(args)
    with open(out / "predictions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window", "row_index", "score", "decision", "label"])
        for j, (s, d) in enumerate(zip(scores, decisions)):
            label = int(ds.y[j]) if ds.y[j] >= 0 else ""
            writer.writerow([j, int(ds.raw_row_index[j]), f"{s:.6f}", int(d), label])
    return {"windows": len(ds), "positives": int(decisions.sum()), "threshold": theta}


def cmd_gradcheck(args) -> dict:
    cfg = _load_config(args)
    data_dir = _data_dir(args)
    model = TSAN.load(args.checkpoint) if args.checkpoint else _model_for(cfg, data_dir)
    ds = _load_split(data_dir, "train")
    batch = prepare(ds.subset(np.arange(min(4, len(ds)))), model.config.n_protocol, 0.5, cfg.seed)
    report = gradcheck(model, batch, args.samples, cfg.train.loss, seed=cfg.seed)
    out = _out_dir(args, cfg)
    _write_json(out / "gradcheck.json", report.to_dict())
    print(f"max relative error {report.max_rel_error:.3e} over {len(report.checked)} samples: "
          f"{'PASS' if report.passed else 'FAIL ' + ', '.join(report.failures)}")
    if not report.passed:
        raise TSANError(f"gradient check failed for {report.failures}")
    return {"max_rel_error": report.max_rel_error, "passed": report.passed}


COMMANDS = {
    "synth-data": cmd_synth_data,
    "preprocess": cmd_preprocess,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, *flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", help="output directory (file path for synth-data)")
        p.add_argument("--seed", type=int, help="overrides data.seed from the config")
        if "config" in flags:
            p.add_argument("--config", help="JSON run config; omitted or {} means all defaults")
        if "data" in flags:
            p.add_argument("--data", help="directory written by `tsan preprocess`")
        return p

    p = add("synth-data", "write a synthetic NSL-KDD-format file")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--dos-fraction", type=float, default=0.5)
    add("preprocess", "encode NSL-KDD files into windowed containers", "config")
    add("pretrain", "self-supervised encoder pretraining", "config", "data")
    p = add("train", "supervised multi-task training", "config", "data")
    p.add_argument("--from-pretrained", help="pretrained encoder container")
    p = add("evaluate", "metrics report for a checkpoint", "data")
    p.add_argument("--checkpoint")
    p.add_argument("--scores", help="CSV with score,label columns to score instead of a model")
    p.add_argument("--threshold", type=float)
    p = add("ablate", "train and evaluate the ablation variants", "config", "data")
    p.add_argument("--variant", help=f"one of {', '.join(ABLATION_VARIANTS)}; default all")
    p = add("predict", "score windows from a container or a raw NSL-KDD file")
    p.add_argument("--checkpoint")
    p.add_argument("--input")
    p.add_argument("--schema", help="schema.json for raw input (default: next to the checkpoint)")
    p.add_argument("--threshold", type=float)
    p = add("gradcheck", "finite-difference check of the full model", "config", "data")
    p.add_argument("--checkpoint")
    p.add_argument("--samples", type=int, default=50)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        result = COMMANDS[args.command](args)
    except (OSError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TSANError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    cfg = RunConfig.load(getattr(args, "config", None)).with_seed(args.seed)
    manifest = {
        "command": args.command,
        "argv": list(argv) if argv is not None else sys.argv[1:],
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "version": version_string(),
        "wall_seconds": round(time.time() - started, 3),
        "result": result,
    }
    manifest_dir = getattr(args, "resolved_out", Path("."))
    _write_json(manifest_dir / f"run-manifest-{args.command}.json", manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
