"""Auxiliary targets and the weighted multi-task loss.

Target definitions for the three auxiliary heads:

* traffic: window mean of the scaled ``count`` feature;
* protocol: one-hot protocol of the window's last record;
* consistency: 1 for an intact window, 0 for one whose temporal rows were
  permuted (``x_spatial`` is never touched).
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, ops
from .config import LossWeights
from .data.windows import WindowedDataset
from .errors import ContractError

logger = logging.getLogger(__name__)

PROB_CLIP = 1e-7


@dataclass
class AuxTargets:
    y_traffic: np.ndarray
    y_protocol: np.ndarray
    y_consistency: np.ndarray
    shuffle_mask: np.ndarray

    def subset(self, idx) -> "AuxTargets":
        return AuxTargets(self.y_traffic[idx], self.y_protocol[idx], self.y_consistency[idx],
                          self.shuffle_mask[idx])


@dataclass
class LossBreakdown:
    l_main: Tensor
    l_traffic: Tensor
    l_protocol: Tensor
    l_consistency: Tensor
    l_total: Tensor

    def values(self) -> dict[str, float]:
        return {name: float(getattr(self, name).item())
                for name in ("l_main", "l_traffic", "l_protocol", "l_consistency", "l_total")}


def _derangement_like(rng: np.random.Generator, rows: np.ndarray) -> np.ndarray | None:
    """A permutation that visibly changes ``rows``, or None if none exists."""
    w = len(rows)
    if w < 2 or np.all(rows == rows[0]):
        return None
    while True:
        perm = rng.permutation(w)
        if not np.array_equal(rows[perm], rows):
            return perm


def build_aux_targets(dataset: WindowedDataset, n_protocol: int, shuffle_fraction: float = 0.5,
                      rng: np.random.Generator | None = None) -> tuple[WindowedDataset, AuxTargets]:
    """Return a copy of ``dataset`` with some windows shuffled, plus the aux targets.

    A window picked for shuffling whose rows are all identical cannot be
    visibly permuted; it is left intact and keeps consistency label 1.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    n = len(dataset)
    x_temporal = dataset.x_temporal.copy()
    consistency = np.ones(n, dtype=np.float32)
    mask = np.zeros(n, dtype=bool)
    if dataset.window < 2 and shuffle_fraction > 0:
        logger.warning("window size 1 admits no reordering; consistency task disabled")
    elif shuffle_fraction > 0:
        picks = rng.random(n) < shuffle_fraction
        for j in np.flatnonzero(picks):
            perm = _derangement_like(rng, x_temporal[j])
            if perm is None:
                continue
            x_temporal[j] = x_temporal[j][perm]
            consistency[j] = 0.0
            mask[j] = True
    protocol = np.zeros((n, n_protocol), dtype=np.float32)
    known = (dataset.aux_protocol >= 0) & (dataset.aux_protocol < n_protocol)
    protocol[np.flatnonzero(known), dataset.aux_protocol[known]] = 1.0
    augmented = dataclasses.replace(dataset, x_temporal=x_temporal)
    aux = AuxTargets(dataset.aux_traffic.astype(np.float32).copy(), protocol, consistency, mask)
    return augmented, aux


def consistency_enabled(window: int) -> bool:
    return window > 1


def effective_weights(weights: LossWeights, window: int) -> LossWeights:
    """Zero the consistency weight when the task is undefined (w == 1)."""
    if not consistency_enabled(window) and weights.consistency != 0:
        logger.warning("window size 1: consistency loss weight forced to 0")
        return dataclasses.replace(weights, consistency=0.0)
    return weights


def binary_cross_entropy(y_true, y_prob: Tensor) -> Tensor:
    y = Tensor(np.asarray(y_true).reshape(y_prob.shape), dtype=y_prob.dtype)
    p = ops.clip(y_prob, PROB_CLIP, 1.0 - PROB_CLIP)
    ll = ops.add(ops.mul(y, ops.log(p)), ops.mul(1.0 - y.data, ops.log(ops.sub(1.0, p))))
    return ops.neg(ops.mean(ll))


def mean_squared_error(y_true, y_pred: Tensor) -> Tensor:
    diff = ops.sub(y_pred, Tensor(np.asarray(y_true).reshape(y_pred.shape), dtype=y_pred.dtype))
    return ops.mean(ops.mul(diff, diff))


def categorical_cross_entropy(y_true, y_prob: Tensor) -> Tensor:
    y = Tensor(np.asarray(y_true), dtype=y_prob.dtype)
    p = ops.clip(y_prob, PROB_CLIP, 1.0 - PROB_CLIP)
    return ops.neg(ops.mean(ops.sum(ops.mul(y, ops.log(p)), axis=-1)))


def weighted_total(losses, weights: LossWeights) -> Tensor:
    l_main, l_traffic, l_protocol, l_consistency = losses
    total = ops.mul(l_main, weights.main)
    for loss, w in ((l_traffic, weights.traffic), (l_protocol, weights.protocol),
                    (l_consistency, weights.consistency)):
        # a zero weight drops the term so its head gets an exact zero gradient
        if w != 0:
            total = ops.add(total, ops.mul(loss, w))
    return total


def compute_losses(outputs, y, aux: AuxTargets, weights: LossWeights) -> LossBreakdown:
    """Batch-mean per-task losses and their weighted sum."""
    n = outputs.y_main.shape[0]
    sizes = {"y": len(y), "traffic": len(aux.y_traffic), "protocol": len(aux.y_protocol),
             "consistency": len(aux.y_consistency)}
    bad = {k: v for k, v in sizes.items() if v != n}
    if bad:
        raise ContractError(f"batch of {n} predictions but target lengths {bad}")
    if aux.y_protocol.shape[1] != outputs.y_protocol.shape[1]:
        raise ContractError(f"protocol targets have {aux.y_protocol.shape[1]} classes, "
                            f"head has {outputs.y_protocol.shape[1]}")
    l_main = binary_cross_entropy(y, outputs.y_main)
    l_traffic = mean_squared_error(aux.y_traffic, outputs.y_traffic)
    l_protocol = categorical_cross_entropy(aux.y_protocol, outputs.y_protocol)
    l_consistency = binary_cross_entropy(aux.y_consistency, outputs.y_consistency)
    total = weighted_total((l_main, l_traffic, l_protocol, l_consistency), weights)
    return LossBreakdown(l_main, l_traffic, l_protocol, l_consistency, total)
