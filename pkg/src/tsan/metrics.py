"""Binary classification metrics, ROC/AUC, timing and report files."""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError

# Published full-scale numbers carried in reports for context; never asserted.
REFERENCE_RESULTS = {"accuracy": 0.926, "auc_roc": 0.954, "inference_ms_per_sample": 0.83, "model_size_mb": 11.4}


@dataclass
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    flags: list[str] = field(default_factory=list)


def confusion_from_counts(tp: int, fp: int, tn: int, fn: int) -> Confusion:
    total = tp + fp + tn + fn
    if total == 0:
        raise ContractError("no samples to score")
    flags = []
    if tp + fp == 0:
        precision = 0.0
        flags.append("precision_undefined")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        flags.append("recall_undefined")
    else:
        recall = tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return Confusion(tp, fp, tn, fn, (tp + tn) / total, precision, recall, f1, flags)


def confusion_and_prf1(scores, labels, theta: float = 0.5) -> Confusion:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    if len(scores) == 0:
        raise ContractError("no samples to score")
    if len(scores) != len(labels):
        raise ContractError(f"{len(scores)} scores but {len(labels)} labels")
    pred = scores > theta
    pos = labels == 1
    return confusion_from_counts(int(np.sum(pred & pos)), int(np.sum(pred & ~pos)),
                                 int(np.sum(~pred & ~pos)), int(np.sum(~pred & pos)))


def auc_roc(scores, labels) -> tuple[float, list[tuple[float, float]]]:
    """Mann-Whitney AUC (ties count 1/2) and the ROC polyline.

    The ROC has one vertex per distinct score (predict positive when
    ``score >= t``) plus the (0, 0) start; its trapezoidal area equals the
    returned AUC.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUC is undefined with a single class present")
    ranks = rankdata(scores, method="average")
    auc = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return float(auc), roc_points(scores, labels)


def roc_points(scores, labels) -> list[tuple[float, float]]:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    pos = np.asarray(labels).reshape(-1) == 1
    n_pos, n_neg = pos.sum(), (~pos).sum()
    order = np.argsort(-scores, kind="stable")
    s, p = scores[order], pos[order]
    tps = np.cumsum(p)
    fps = np.cumsum(~p)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    points = [(0.0, 0.0)]
    points += [(float(fps[i] / n_neg), float(tps[i] / n_pos)) for i in last]
    return points


def trapezoid_area(points) -> float:
    xs, ys = np.asarray(points).T
    return float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2.0))


@dataclass
class Timing:
    train_seconds: float | None = None
    inference_ms_per_sample: float | None = None
    model_size_bytes: int | None = None


@dataclass
class MetricsReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc_roc: float | None
    roc_points: list[tuple[float, float]]
    threshold: float = 0.5
    flags: list[str] = field(default_factory=list)
    timing: Timing = field(default_factory=Timing)
    difficulty: dict | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roc_points"] = [list(p) for p in self.roc_points]
        d["reference_results"] = REFERENCE_RESULTS
        return d

    def summary_row(self) -> dict:
        return {k: getattr(self, k) for k in ("accuracy", "precision", "recall", "f1", "auc_roc")}


def evaluate_scores(scores, labels, theta: float = 0.5) -> MetricsReport:
    conf = confusion_and_prf1(scores, labels, theta)
    flags = list(conf.flags)
    try:
        auc, points = auc_roc(scores, labels)
    except ContractError:
        auc, points = None, []
        flags.append("auc_undefined")
    return MetricsReport(conf.tp, conf.fp, conf.tn, conf.fn, conf.accuracy, conf.precision, conf.recall,
                         conf.f1, auc, points, theta, flags)


def measure_timing(model, x_temporal: np.ndarray, x_spatial: np.ndarray, repetitions: int = 3,
                   checkpoint_path: str | os.PathLike | None = None, batch: int = 512) -> Timing:
    """Median wall-clock inference cost per sample after one warm-up pass."""
    n = len(x_spatial)
    model.predict_proba(x_temporal[:batch], x_spatial[:batch], batch)
    samples = []
    for _ in range(max(1, repetitions)):
        start = time.perf_counter()
        model.predict_proba(x_temporal, x_spatial, batch)
        samples.append((time.perf_counter() - start) * 1000.0 / max(n, 1))
    size = os.path.getsize(checkpoint_path) if checkpoint_path is not None else None
    return Timing(inference_ms_per_sample=float(np.median(samples)), model_size_bytes=size)


def write_report(path: str | os.PathLike, report: MetricsReport) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)


def write_roc_csv(path: str | os.PathLike, points) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        writer.writerows(points)
