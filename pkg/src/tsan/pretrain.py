"""Self-supervised encoder pretraining and weight transfer.

The temporal encoder learns to predict the encoded row that follows each
window; the spatial encoder learns to reconstruct its own input. Both
objectives use a throwaway dense head that is dropped afterwards, and only
encoder state (``temporal.*`` and ``spatial.*``, batchnorm buffers
included) is handed on to the supervised model.
"""

from __future__ import annotations

import logging
import os
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import container
from .autodiff import Parameter, Tape, Tensor, adam_step, ops
from .config import PretrainConfig
from .data.windows import WindowedDataset, next_step_targets
from .errors import ContractError, ShapeError
from .model import TSAN

logger = logging.getLogger(__name__)

ENCODER_PREFIXES = ("temporal.", "spatial.")


@dataclass
class PretrainResult:
    state: OrderedDict[str, np.ndarray]
    history: dict[str, list[float]] = field(default_factory=dict)

    def __len__(self):
        return len(self.state)


def _head(n_in: int, n_out: int, name: str, rng: np.random.Generator, dtype) -> list[Parameter]:
    limit = np.sqrt(6.0 / (n_in + n_out))
    w = Parameter(rng.uniform(-limit, limit, (n_in, n_out)).astype(dtype), f"pretrain.{name}.w")
    b = Parameter(np.zeros(n_out, dtype=dtype), f"pretrain.{name}.b")
    return [w, b]


def _mse(pred: Tensor, target: np.ndarray) -> Tensor:
    diff = ops.sub(pred, Tensor(target, dtype=pred.dtype))
    return ops.mean(ops.mul(diff, diff))


def _fit(encode, params, head, inputs, targets, config: PretrainConfig, rng) -> list[float]:
    """Minibatch Adam on ``mse(head(encode(x)), target)``; returns per-epoch mean loss."""
    history = []
    n = len(targets)
    trainable = params + head
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch):
            idx = order[start:start + config.batch]
            with Tape() as tape:
                h = encode(inputs[idx], rng)
                loss = _mse(ops.linear(h, head[0], head[1]), targets[idx])
            tape.backward(loss, params=trainable)
            adam_step(trainable, lr=config.lr)
            total += loss.item() * len(idx)
        history.append(total / n)
    return history


def _encoder_state(model: TSAN, prefix: str) -> OrderedDict[str, np.ndarray]:
    return OrderedDict((k, v.copy()) for k, v in model.state_dict().items() if k.startswith(prefix))


def pretrain_temporal(model: TSAN, windows: np.ndarray, targets: np.ndarray,
                      config: PretrainConfig, seed: int = 0) -> PretrainResult:
    """Next-step prediction: ``dense(temporal_encoder(window)) ~ next row``.

    ``model`` is not modified; the trained temporal state is returned.
    """
    if not model.config.use_temporal:
        return PretrainResult(OrderedDict())
    if len(targets) == 0:
        raise ContractError("no window has a following row to predict")
    work = model.copy()
    rng = np.random.default_rng(seed)
    head = _head(work.config.d_model, targets.shape[1], "next_step", rng, work.dtype)
    params = work.parameters("temporal.")
    history = _fit(lambda x, r: work.temporal_forward(x.astype(work.dtype), training=True, rng=r)[0],
                   params, head, np.asarray(windows), np.asarray(targets, dtype=work.dtype), config, rng)
    return PretrainResult(_encoder_state(work, "temporal."), {"temporal": history})


def pretrain_spatial(model: TSAN, rows: np.ndarray, config: PretrainConfig, seed: int = 0) -> PretrainResult:
    """Reconstruction: ``dense(spatial_encoder(x)) ~ x``."""
    if not model.config.use_spatial:
        return PretrainResult(OrderedDict())
    work = model.copy()
    rng = np.random.default_rng(seed + 1)
    rows = np.asarray(rows, dtype=work.dtype)
    head = _head(work.config.d_spat, rows.shape[1], "reconstruct", rng, work.dtype)
    params = work.parameters("spatial.")
    history = _fit(lambda x, r: work.spatial_forward(x, training=True, rng=r),
                   params, head, rows, rows, config, rng)
    return PretrainResult(_encoder_state(work, "spatial."), {"spatial": history})


def temporal_pairs(dataset: WindowedDataset, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Windows with a valid next row, their targets and the target row indices."""
    keep, targets = next_step_targets(dataset, rows)
    return dataset.x_temporal[keep], targets, dataset.raw_row_index[keep] + 1


def pretrain(model: TSAN, dataset: WindowedDataset, rows: np.ndarray, config: PretrainConfig,
             seed: int = 0) -> PretrainResult:
    """Pretrain both encoders on the training split; ``epochs == 0`` is a no-op."""
    if config.epochs == 0:
        return PretrainResult(OrderedDict())
    windows, targets, _ = temporal_pairs(dataset, rows)
    temporal = pretrain_temporal(model, windows, targets, config, seed)
    spatial = pretrain_spatial(model, dataset.x_spatial, config, seed)
    state = OrderedDict(temporal.state)
    state.update(spatial.state)
    return PretrainResult(state, {**temporal.history, **spatial.history})


def transfer_weights(pretrained, model: TSAN) -> list[str]:
    """Copy encoder entries from ``pretrained`` into ``model``; returns the manifest.

    Fusion and head parameters are never touched.
    """
    state = pretrained.state if isinstance(pretrained, PretrainResult) else pretrained
    target = model.state_dict()
    manifest = []
    for path, value in state.items():
        if not path.startswith(ENCODER_PREFIXES) or path not in target:
            continue
        value = np.asarray(value)
        if value.shape != target[path].shape:
            raise ShapeError(f"pretrained {path} has shape {value.shape}, model expects {target[path].shape}")
        target[path][...] = value
        manifest.append(path)
    return manifest


def save_pretrained(path: str | os.PathLike, result: PretrainResult, model: TSAN) -> int:
    return container.save(path, result.state, {"kind": "tsan_pretrained", "config": model.config.to_dict(),
                                               "history": result.history})


def load_pretrained(path: str | os.PathLike) -> PretrainResult:
    entries, header = container.load(path)
    return PretrainResult(OrderedDict(entries), header.get("history", {}))
