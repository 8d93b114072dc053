"""End-to-end preprocessing: raw records to windowed train/validation/test sets."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nslkdd import DOS_LABELS, NORMAL_LABEL, FeatureSchema, RawRecord, ScalerStats, binarize_labels, encode_records, fit_scaler
from .windows import SplitSpec, WindowedDataset, build_windows, stratified_split

logger = logging.getLogger(__name__)

TRAFFIC_FEATURE = "count"
_KEPT_NAMES = DOS_LABELS | {NORMAL_LABEL}


@dataclass
class EncodedSplit:
    rows: np.ndarray
    labels: np.ndarray
    windows: WindowedDataset
    summary: dict


def _summary(records: Sequence[RawRecord], kept, ds: WindowedDataset) -> dict:
    by_label = Counter(r.label.lower() for r in records)
    kept_counts = Counter(int(y) for y in kept.labels)
    difficulty = {}
    for cls in (0, 1):
        d = [r.difficulty for r, y in zip(kept.records, kept.labels) if y == cls]
        difficulty[str(cls)] = float(np.mean(d)) if d else None
    return {
        "records": len(records),
        "kept": len(kept),
        "dropped": len(records) - len(kept),
        "kept_normal": kept_counts.get(0, 0),
        "kept_dos": kept_counts.get(1, 0),
        "dropped_labels": dict(sorted((k, v) for k, v in by_label.items()
                                      if k.rstrip(".") not in _KEPT_NAMES)),
        "mean_difficulty": difficulty,
        "windows": len(ds),
    }


def encode_split(records: Sequence[RawRecord], schema: FeatureSchema, stats: ScalerStats,
                 w: int, s: int) -> EncodedSplit:
    kept = binarize_labels(records)
    rows = encode_records(kept.records, schema, stats)
    protocol = np.asarray([schema.protocol_index(r.protocol_type) for r in kept.records], dtype=np.int64)
    ds = build_windows(rows, kept.labels, w, s, protocol_index=protocol,
                       traffic_column=schema.column(TRAFFIC_FEATURE))
    summary = _summary(records, kept, ds)
    summary["width"] = schema.width
    return EncodedSplit(rows, kept.labels, ds, summary)


@dataclass
class Preprocessed:
    schema: FeatureSchema
    scaler: ScalerStats
    train: WindowedDataset
    validation: WindowedDataset
    test: WindowedDataset | None
    train_rows: np.ndarray
    summary: dict


def preprocess(train_records: Sequence[RawRecord], test_records: Sequence[RawRecord] | None,
               w: int = 5, s: int = 2, split: SplitSpec | None = None) -> Preprocessed:
    """Fit schema and scaler on the filtered training file, then window both files."""
    split = split or SplitSpec()
    kept_train = binarize_labels(train_records)
    schema = FeatureSchema.fit(kept_train.records)
    scaler = fit_scaler(kept_train.records)
    enc_train = encode_split(train_records, schema, scaler, w, s)
    train, val = stratified_split(enc_train.windows, split)
    summary = {"width": schema.width, "window": w, "stride": s, "train_file": enc_train.summary,
               "train_windows": len(train), "validation_windows": len(val)}
    test = None
    if test_records is not None:
        enc_test = encode_split(test_records, schema, scaler, w, s)
        test = enc_test.windows
        summary["test_file"] = enc_test.summary
    return Preprocessed(schema, scaler, train, val, test, enc_train.rows, summary)

