"""Supervised multi-task training, early stopping, ablations and gradcheck."""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, adam_step
from .config import LossWeights, ModelConfig, PretrainConfig, TrainConfig
from .data.windows import WindowedDataset
from .errors import ConfigError, ContractError
from .gradcheck import DEFAULT_STEP, DEFAULT_TOL, GradcheckReport, numeric_gradient, relative_error
from .metrics import MetricsReport, evaluate_scores
from .model import TSAN, build_model
from .objective import AuxTargets, build_aux_targets, compute_losses, effective_weights
from .pretrain import pretrain, transfer_weights

logger = logging.getLogger(__name__)

LOSS_NAMES = ("l_main", "l_traffic", "l_protocol", "l_consistency", "l_total")
HISTORY_FIELDS = ("epoch",) + LOSS_NAMES + ("val_accuracy", "val_l_main")

ABLATION_VARIANTS = ("full", "no_temporal", "no_spatial", "no_cross_attention", "no_multitask", "no_pretrain")
ABLATION_LABELS = {
    "full": "TSAN (Full)",
    "no_temporal": "TSAN w/o Temporal Encoder",
    "no_spatial": "TSAN w/o Spatial Encoder",
    "no_cross_attention": "TSAN w/o Cross-Attention",
    "no_multitask": "TSAN w/o Multi-Task Learning",
    "no_pretrain": "TSAN w/o Self-Supervised Pre-training",
}


@dataclass
class Batchable:
    """A windowed dataset with its auxiliary targets attached."""

    data: WindowedDataset
    aux: AuxTargets

    def __len__(self):
        return len(self.data)

    def batch(self, idx):
        return self.data.subset(idx), self.aux.subset(idx)


def prepare(dataset: WindowedDataset, n_protocol: int, shuffle_fraction: float, seed: int) -> Batchable:
    augmented, aux = build_aux_targets(dataset, n_protocol, shuffle_fraction, np.random.default_rng(seed))
    return Batchable(augmented, aux)


class EarlyStopping:
    """Track the best validation accuracy and decide when to stop.

    An epoch counts as an improvement only if it strictly beats the best
    accuracy so far. ``patience=None`` never stops early.
    """

    def __init__(self, patience: int | None):
        self.patience = patience
        self.best_accuracy = -np.inf
        self.best_epoch = 0
        self.best_state = None
        self.since_improvement = 0

    def update(self, epoch: int, accuracy: float, snapshot=None) -> bool:
        """Record one epoch; returns True when training should stop."""
        if accuracy > self.best_accuracy:
            self.best_accuracy = accuracy
            self.best_epoch = epoch
            self.best_state = snapshot() if callable(snapshot) else snapshot
            self.since_improvement = 0
        else:
            self.since_improvement += 1
        return self.patience is not None and self.since_improvement >= self.patience


@dataclass
class TrainResult:
    best_state: OrderedDict
    history: list[dict]
    best_epoch: int
    best_val_accuracy: float | None
    train_seconds: float = 0.0


def _snapshot(model: TSAN) -> OrderedDict:
    return OrderedDict((k, v.copy()) for k, v in model.state_dict().items())


def score(model: TSAN, dataset: WindowedDataset, batch: int = 512) -> np.ndarray:
    return model.predict_proba(dataset.x_temporal, dataset.x_spatial, batch)


def evaluate_losses(model: TSAN, data: Batchable, weights: LossWeights, batch: int = 512) -> dict[str, float]:
    """Eval-mode batch-mean losses over a whole set (no tape)."""
    sums = dict.fromkeys(LOSS_NAMES, 0.0)
    n = len(data)
    for start in range(0, n, batch):
        idx = np.arange(start, min(n, start + batch))
        ds, aux = data.batch(idx)
        out = model.forward(ds.x_temporal, ds.x_spatial)
        losses = compute_losses(out, ds.y, aux, weights).values()
        for k in LOSS_NAMES:
            sums[k] += losses[k] * len(idx)
    return {k: v / n for k, v in sums.items()}


def train(model: TSAN, train_set: Batchable, validation: Batchable | None, config: TrainConfig,
          seed: int = 0) -> TrainResult:
    """Minibatch Adam with per-epoch validation and early stopping.

    The model is left holding the best-validation-accuracy weights.
    """
    if len(train_set) == 0:
        raise ContractError("empty training set")
    use_val = validation is not None and len(validation) > 0
    if not use_val:
        logger.warning("no validation data; early stopping disabled")
    weights = effective_weights(config.loss, model.config.window)
    rng = np.random.default_rng(seed)
    stopper = EarlyStopping(config.patience if use_val else None)
    history = []
    params = model.parameters()
    started = time.perf_counter()
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_set))
        sums = dict.fromkeys(LOSS_NAMES, 0.0)
        for start in range(0, len(order), config.batch):
            idx = order[start:start + config.batch]
            ds, aux = train_set.batch(idx)
            with Tape() as tape:
                out = model.forward(ds.x_temporal, ds.x_spatial, training=True, rng=rng)
                losses = compute_losses(out, ds.y, aux, weights)
            tape.backward(losses.l_total, params=params)
            adam_step(params, lr=config.lr)
            for k, v in losses.values().items():
                sums[k] += v * len(idx)
        row = {"epoch": epoch, **{k: v / len(order) for k, v in sums.items()}}
        if use_val:
            val_scores = score(model, validation.data)
            row["val_accuracy"] = float(np.mean((val_scores > config.threshold) == (validation.data.y == 1)))
            row["val_l_main"] = evaluate_losses(model, validation, weights)["l_main"]
            stop = stopper.update(epoch, row["val_accuracy"], lambda: _snapshot(model))
        else:
            row["val_accuracy"] = None
            row["val_l_main"] = None
            stopper.update(epoch, float(epoch), lambda: _snapshot(model))
            stop = False
        history.append(row)
        logger.info("epoch %d: %s", epoch, row)
        if stop:
            break
    model.load_state_dict(stopper.best_state)
    best_acc = float(stopper.best_accuracy) if use_val else None
    return TrainResult(stopper.best_state, history, stopper.best_epoch, best_acc,
                       time.perf_counter() - started)


def write_history(path: str | os.PathLike, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        writer.writeheader()
        for row in history:
            writer.writerow({k: row.get(k) for k in HISTORY_FIELDS})


def evaluate(model: TSAN, dataset: WindowedDataset, theta: float = 0.5) -> MetricsReport:
    return evaluate_scores(score(model, dataset), dataset.y, theta)


# ---------------------------------------------------------------------------
# ablations


def variant_configs(variant: str, model_cfg: ModelConfig, train_cfg: TrainConfig,
                    pretrain_cfg: PretrainConfig) -> tuple[ModelConfig, TrainConfig, PretrainConfig]:
    """Configs for one ablation row; ``full`` returns the inputs unchanged."""
    if variant not in ABLATION_VARIANTS:
        raise ConfigError(f"unknown ablation variant {variant!r}; expected one of {', '.join(ABLATION_VARIANTS)}")
    if variant == "no_temporal":
        model_cfg = dataclasses.replace(model_cfg, use_temporal=False)
    elif variant == "no_spatial":
        model_cfg = dataclasses.replace(model_cfg, use_spatial=False)
    elif variant == "no_cross_attention":
        model_cfg = dataclasses.replace(model_cfg, fusion="concat")
    elif variant == "no_multitask":
        train_cfg = dataclasses.replace(train_cfg, loss=train_cfg.loss.without_auxiliary())
    elif variant == "no_pretrain":
        pretrain_cfg = dataclasses.replace(pretrain_cfg, epochs=0)
    return model_cfg, train_cfg, pretrain_cfg


@dataclass
class RunOutcome:
    model: TSAN
    result: TrainResult
    report: MetricsReport | None
    manifest: list[str] = field(default_factory=list)


def fit(model_cfg: ModelConfig, train_ds: WindowedDataset, val_ds: WindowedDataset | None,
        rows: np.ndarray | None, train_cfg: TrainConfig, pretrain_cfg: PretrainConfig,
        seed: int = 0, test_ds: WindowedDataset | None = None) -> RunOutcome:
    """Build, optionally pretrain, train and evaluate one model."""
    model = build_model(model_cfg, width=train_ds.width, seed=seed)
    manifest = []
    if pretrain_cfg.epochs > 0 and rows is not None:
        manifest = transfer_weights(pretrain(model, train_ds, rows, pretrain_cfg, seed), model)
    n_protocol = model.config.n_protocol
    train_set = prepare(train_ds, n_protocol, train_cfg.shuffle_fraction, seed)
    val_set = prepare(val_ds, n_protocol, 0.0, seed) if val_ds is not None else None
    result = train(model, train_set, val_set, train_cfg, seed)
    report = None
    if test_ds is not None:
        report = evaluate(model, test_ds, train_cfg.threshold)
        report.timing.train_seconds = result.train_seconds
    return RunOutcome(model, result, report, manifest)


def run_ablation(variant: str, train_ds: WindowedDataset, val_ds: WindowedDataset | None,
                 test_ds: WindowedDataset, rows: np.ndarray | None, model_cfg: ModelConfig,
                 train_cfg: TrainConfig, pretrain_cfg: PretrainConfig, seed: int = 0) -> MetricsReport:
    m, t, p = variant_configs(variant, model_cfg, train_cfg, pretrain_cfg)
    return fit(m, train_ds, val_ds, rows, t, p, seed, test_ds).report


def ablation_table(reports: dict[str, MetricsReport]) -> list[dict]:
    return [{"variant": v, "label": ABLATION_LABELS[v], **reports[v].summary_row()}
            for v in ABLATION_VARIANTS if v in reports]


# ---------------------------------------------------------------------------
# gradient check on the full model


def _total_loss(model: TSAN, ds: WindowedDataset, aux: AuxTargets, weights: LossWeights):
    out = model.forward(ds.x_temporal, ds.x_spatial, training=False)
    return compute_losses(out, ds.y, aux, weights).l_total


def _analytic_gradients(model: TSAN, ds: WindowedDataset, aux: AuxTargets, weights: LossWeights) -> dict:
    params = model.parameters()
    with Tape() as tape:
        loss = _total_loss(model, ds, aux, weights)
    tape.backward(loss, params=params)
    return {p.path: p.grad.copy() for p in params}


def gradcheck(model: TSAN, batch: Batchable, sample_count: int = 50, weights: LossWeights | None = None,
              seed: int = 0, tol: float = DEFAULT_TOL, h: float = DEFAULT_STEP) -> GradcheckReport:
    """Compare analytic and central-difference gradients of the total loss.

    Runs on a float64 copy in eval mode (dropout off, batchnorm running
    statistics), sampling ``sample_count`` scalars: a parameter tensor uniformly, then
    one element of it.
    """
    weights = weights or LossWeights()
    report = GradcheckReport(0.0, tolerance=tol)
    if sample_count <= 0:
        return report
    m64 = model.astype(np.float64)
    ds, aux = batch.data, batch.aux
    analytic = _analytic_gradients(m64, ds, aux, weights)
    rng = np.random.default_rng(seed)
    paths = list(m64.params)
    picks = rng.integers(len(paths), size=sample_count)

    def loss_value():
        return float(_total_loss(m64, ds, aux, weights).item())

    for k in picks:
        path = paths[k]
        data = m64.params[path].data
        idx = tuple(int(rng.integers(n)) for n in data.shape)
        num = numeric_gradient(loss_value, data, idx, h)
        ana = float(analytic[path][idx])
        err = float(relative_error(ana, num))
        report.checked.append((path, idx, ana, num, err))
        report.max_rel_error = max(report.max_rel_error, err)
        if err > tol and path not in report.failures:
            report.failures.append(path)
    return report
