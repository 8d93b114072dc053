"""Sliding temporal windows, stratified splits and dataset containers."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .. import container
from ..errors import ConfigError

logger = logging.getLogger(__name__)


def window_indices(n: int, w: int, s: int) -> np.ndarray:
    """End indices ``s*k + w - 1`` that fall inside ``range(n)``, ascending."""
    if w < 1 or s < 1:
        raise ConfigError(f"window size and stride must be >= 1, got w={w}, s={s}")
    if n < w:
        return np.zeros(0, dtype=np.int64)
    return np.arange(w - 1, n, s, dtype=np.int64)


@dataclass
class WindowedDataset:
    """Windows over an encoded record sequence.

    ``x_temporal[j]`` holds rows ``i_j - w + 1 .. i_j``; ``x_spatial[j]`` is
    row ``i_j``; ``raw_row_index[j] == i_j``.
    """

    x_temporal: np.ndarray
    x_spatial: np.ndarray
    y: np.ndarray
    raw_row_index: np.ndarray
    aux_protocol: np.ndarray
    aux_traffic: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.y)

    @property
    def window(self) -> int:
        return self.x_temporal.shape[1]

    @property
    def width(self) -> int:
        return self.x_temporal.shape[2]

    def subset(self, idx) -> "WindowedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return WindowedDataset(self.x_temporal[idx], self.x_spatial[idx], self.y[idx],
                               self.raw_row_index[idx], self.aux_protocol[idx],
                               self.aux_traffic[idx], dict(self.meta))

    def class_counts(self) -> dict[int, int]:
        values, counts = np.unique(self.y, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


def build_windows(rows: np.ndarray, labels: np.ndarray, w: int = 5, s: int = 2,
                  protocol_index: np.ndarray | None = None,
                  traffic_column: int | None = None) -> WindowedDataset:
    """Cut encoded rows into windows ending at ``window_indices(n, w, s)``.

    ``protocol_index`` (per row, -1 for unknown) and ``traffic_column`` feed
    the auxiliary ingredients: the protocol of each window's last record and
    the window mean of one scaled feature column.
    """
    rows = np.asarray(rows, dtype=np.float32)
    labels = np.asarray(labels)
    n, f = rows.shape
    if len(labels) != n:
        raise ConfigError(f"{n} rows but {len(labels)} labels")
    idx = window_indices(n, w, s)
    if len(idx) == 0:
        logger.warning("only %d rows for window size %d; dataset is empty", n, w)
    offsets = np.arange(-w + 1, 1)
    x_temporal = rows[idx[:, None] + offsets[None, :]] if len(idx) else np.zeros((0, w, f), np.float32)
    x_spatial = rows[idx].copy()
    y = labels[idx].astype(np.float32)
    if protocol_index is None:
        aux_protocol = np.full(len(idx), -1, dtype=np.int64)
    else:
        aux_protocol = np.asarray(protocol_index, dtype=np.int64)[idx]
    if traffic_column is None:
        aux_traffic = np.zeros(len(idx), dtype=np.float32)
    else:
        aux_traffic = x_temporal[:, :, traffic_column].mean(axis=1).astype(np.float32)
    return WindowedDataset(x_temporal.astype(np.float32), x_spatial, y, idx, aux_protocol, aux_traffic,
                           {"window": w, "stride": s})


def next_step_targets(dataset: WindowedDataset, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pair each window with the encoded row right after its last record.

    Returns ``(keep, targets)``: ``keep`` indexes the windows whose
    ``raw_row_index + 1`` is still inside ``rows``.
    """
    nxt = dataset.raw_row_index + 1
    keep = np.flatnonzero(nxt < len(rows))
    return keep, np.asarray(rows, dtype=np.float32)[nxt[keep]]


# ---------------------------------------------------------------------------
# splits


@dataclass
class SplitSpec:
    fraction: float = 0.2
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ConfigError(f"validation fraction must be in (0, 1), got {self.fraction}")


def _allocate(counts: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder rounding of ``counts * fraction`` summing to ``total``."""
    exact = counts * (total / counts.sum())
    base = np.floor(exact).astype(np.int64)
    short = total - base.sum()
    order = np.argsort(-(exact - base), kind="stable")
    base[order[:short]] += 1
    return base


def stratified_split(dataset: WindowedDataset, spec: SplitSpec) -> tuple[WindowedDataset, WindowedDataset]:
    """Split into ``(train, validation)``; both keep the original window order."""
    n = len(dataset)
    rng = np.random.default_rng(spec.seed)
    n_val = int(round(n * spec.fraction))
    classes = np.unique(dataset.y)
    if not spec.stratified or len(classes) < 2:
        if spec.stratified:
            logger.warning("single-class dataset; falling back to a plain random split")
        val_idx = rng.permutation(n)[:n_val]
    else:
        members = [np.flatnonzero(dataset.y == c) for c in classes]
        quota = _allocate(np.asarray([len(m) for m in members], dtype=np.float64), n_val)
        val_idx = np.concatenate([rng.permutation(m)[:q] for m, q in zip(members, quota)])
    mask = np.zeros(n, dtype=bool)
    mask[val_idx] = True
    return dataset.subset(np.flatnonzero(~mask)), dataset.subset(np.flatnonzero(mask))


# ---------------------------------------------------------------------------
# container I/O

_ENTRIES = ("x_temporal", "x_spatial", "y", "aux_protocol", "aux_traffic", "raw_row_index")


def save_dataset(path: str | os.PathLike, ds: WindowedDataset) -> int:
    entries = {name: getattr(ds, name) for name in _ENTRIES}
    return container.save(path, entries, {"kind": "windowed_dataset", "meta": ds.meta})


def load_dataset(path: str | os.PathLike) -> WindowedDataset:
    entries, header = container.load(path)
    return WindowedDataset(
        x_temporal=entries["x_temporal"],
        x_spatial=entries["x_spatial"],
        y=entries["y"],
        raw_row_index=entries["raw_row_index"].astype(np.int64),
        aux_protocol=entries["aux_protocol"].astype(np.int64),
        aux_traffic=entries["aux_traffic"],
        meta=header.get("meta", {}),
    )
