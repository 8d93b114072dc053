"""Temporal-spatial attention network.

Data flow for one batch::

    x_temporal (B, w, f) -> project f->d_model, + positional table
                         -> [self-attention + residual + LayerNorm,
                             FFN + residual + LayerNorm] -> mean over w -> h_temp
    x_spatial  (B, f)    -> (B, f, 1) -> [conv -> maxpool -> batchnorm -> dropout] x 2
                         -> flatten -> dense + ReLU -> h_spat
    fusion               -> project both to d_common, stack as 2 tokens,
                            multi-head self-attention, mean over tokens,
                            dense + ReLU -> h_combined
    heads                -> main (sigmoid), traffic (linear),
                            protocol (softmax), consistency (sigmoid)
"""

from __future__ import annotations

import dataclasses
import os
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import container
from .autodiff import Parameter, Tensor, ops
from .config import ModelConfig
from .errors import ConfigError, ShapeError

HEAD_NAMES = ("main", "traffic", "protocol", "consistency")


@dataclass
class ForwardOutputs:
    y_main: Tensor
    y_traffic: Tensor
    y_protocol: Tensor
    y_consistency: Tensor
    h_combined: Tensor
    h_temp: Tensor | None = None
    h_spat: Tensor | None = None
    temporal_attention: list[np.ndarray] = field(default_factory=list)
    fusion_attention: np.ndarray | None = None


def threshold_decision(y_main, theta: float = 0.5) -> np.ndarray:
    """1 where the DoS probability is strictly above ``theta``."""
    y = y_main.data if isinstance(y_main, Tensor) else np.asarray(y_main)
    return (y > theta).astype(np.int64)


def spatial_lengths(cfg: ModelConfig, width: int) -> list[int]:
    """Sequence length entering each conv block, plus the final length."""
    lengths = [width]
    length = width
    for _ in cfg.conv_filters:
        if length < cfg.conv_kernel:
            raise ConfigError(f"feature width {width} too small for the conv stack (length {length} < kernel)")
        length = length - cfg.conv_kernel + 1
        if length < cfg.pool:
            raise ConfigError(f"feature width {width} too small for the conv stack (length {length} < pool)")
        length //= cfg.pool
        lengths.append(length)
    return lengths


def multi_head_attention(x: Tensor, wq, wk, wv, wo, n_heads: int):
    """Self-attention over axis 1 of ``x`` (B, T, d).

    The per-head projections are column blocks of ``wq``/``wk``/``wv``.
    Returns the output (B, T, d_out) and the weights (B, heads, T, T).
    """
    b, t, _ = x.shape
    d = wq.shape[1]
    d_k = d // n_heads

    def split(z):
        return ops.transpose(ops.reshape(z, (b, t, n_heads, d_k)), (0, 2, 1, 3))

    q = split(ops.matmul(x, wq))
    k = split(ops.matmul(x, wk))
    v = split(ops.matmul(x, wv))
    heads, weights = ops.scaled_dot_attention(q, k, v)
    merged = ops.reshape(ops.transpose(heads, (0, 2, 1, 3)), (b, t, d))
    return ops.matmul(merged, wo), weights


class TSAN:
    """Parameters, buffers and forward pass of the network.

    ``params`` maps stable paths such as ``"temporal.block0.attn.wq"`` to
    :class:`Parameter` objects; ``buffers`` holds the batchnorm running
    statistics, which are saved with the weights but never optimized.
    """

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        if config.width is None:
            raise ConfigError("model config needs the encoded feature width")
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params: OrderedDict[str, Parameter] = OrderedDict()
        self.buffers: OrderedDict[str, np.ndarray] = OrderedDict()
        self._rng = np.random.default_rng(seed)
        self._build()

    # -- construction ------------------------------------------------------

    def _glorot(self, path, shape, fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        self._add(path, self._rng.uniform(-limit, limit, size=shape))

    def _add(self, path, value):
        if path in self.params:
            raise ValueError(f"duplicate parameter path {path}")
        self.params[path] = Parameter(np.asarray(value, dtype=self.dtype), path)

    def _dense(self, prefix, n_in, n_out):
        self._glorot(f"{prefix}.w", (n_in, n_out), n_in, n_out)
        self._add(f"{prefix}.b", np.zeros(n_out))

    def _attention(self, prefix, d_in, d):
        for name in ("wq", "wk", "wv"):
            self._glorot(f"{prefix}.{name}", (d_in, d), d_in, d)
        self._glorot(f"{prefix}.wo", (d, d), d, d)

    def _norm(self, prefix, d):
        self._add(f"{prefix}.gamma", np.ones(d))
        self._add(f"{prefix}.beta", np.zeros(d))

    def _build(self):
        cfg = self.config
        f = cfg.width
        if cfg.use_temporal:
            self._dense("temporal.input_proj", f, cfg.d_model)
            self._add("temporal.pos_embedding", self._rng.uniform(-0.05, 0.05, (cfg.window, cfg.d_model)))
            for i in range(cfg.n_transformer_layers):
                p = f"temporal.block{i}"
                self._attention(f"{p}.attn", cfg.d_model, cfg.d_model)
                self._norm(f"{p}.ln1", cfg.d_model)
                self._dense(f"{p}.ffn1", cfg.d_model, cfg.d_ff)
                self._dense(f"{p}.ffn2", cfg.d_ff, cfg.d_model)
                self._norm(f"{p}.ln2", cfg.d_model)
        if cfg.use_spatial:
            lengths = spatial_lengths(cfg, f)
            c_in = 1
            k = cfg.conv_kernel
            for i, c_out in enumerate(cfg.conv_filters):
                self._glorot(f"spatial.conv{i}.w", (k, c_in, c_out), k * c_in, k * c_out)
                self._add(f"spatial.conv{i}.b", np.zeros(c_out))
                self._norm(f"spatial.bn{i}", c_out)
                self.buffers[f"spatial.bn{i}.running_mean"] = np.zeros(c_out, dtype=self.dtype)
                self.buffers[f"spatial.bn{i}.running_var"] = np.ones(c_out, dtype=self.dtype)
                c_in = c_out
            self._dense("spatial.dense", lengths[-1] * c_in, cfg.d_spat)
        if cfg.fusion == "attention":
            if cfg.use_temporal:
                self._dense("fusion.proj_temporal", cfg.d_model, cfg.d_common)
            if cfg.use_spatial:
                self._dense("fusion.proj_spatial", cfg.d_spat, cfg.d_common)
            self._attention("fusion.attn", cfg.d_common, cfg.d_common)
            self._dense("fusion.combined", cfg.d_common, cfg.d_combined)
        else:
            self._dense("fusion.proj_temporal", cfg.d_model, cfg.d_common)
            self._dense("fusion.proj_spatial", cfg.d_spat, cfg.d_common)
            self._dense("fusion.combined", 2 * cfg.d_common, cfg.d_combined)
        self._dense("heads.main", cfg.d_combined, 1)
        self._dense("heads.traffic", cfg.d_combined, 1)
        self._dense("heads.protocol", cfg.d_combined, cfg.n_protocol)
        self._dense("heads.consistency", cfg.d_combined, 1)

    # -- parameter access --------------------------------------------------

    def parameters(self, prefix: str = "") -> list[Parameter]:
        return [p for path, p in self.params.items() if path.startswith(prefix)]

    def __getitem__(self, path: str) -> Parameter:
        return self.params[path]

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def state_dict(self) -> OrderedDict[str, np.ndarray]:
        state = OrderedDict((path, p.data) for path, p in self.params.items())
        state.update(self.buffers)
        return state

    def load_state_dict(self, state, strict: bool = True) -> list[str]:
        """Copy arrays into matching paths; returns the paths copied."""
        copied = []
        for path, value in state.items():
            target = self.params[path].data if path in self.params else self.buffers.get(path)
            if target is None:
                if strict:
                    raise KeyError(f"unexpected entry {path!r} in state")
                continue
            value = np.asarray(value)
            if value.shape != target.shape:
                raise ShapeError(f"shape mismatch at {path}: checkpoint {value.shape} vs model {target.shape}")
            target[...] = value
            copied.append(path)
        if strict:
            missing = [p for p in self.state_dict() if p not in state]
            if missing:
                raise KeyError(f"state is missing entries: {missing[:5]}")
        return copied

    def astype(self, dtype) -> "TSAN":
        clone = object.__new__(TSAN)
        clone.config = self.config
        clone.dtype = np.dtype(dtype)
        clone.params = OrderedDict((k, p.astype(dtype)) for k, p in self.params.items())
        clone.buffers = OrderedDict((k, v.astype(dtype)) for k, v in self.buffers.items())
        clone._rng = np.random.default_rng(0)
        return clone

    def copy(self) -> "TSAN":
        return self.astype(self.dtype)

    # -- checkpoints -------------------------------------------------------

    def save(self, path: str | os.PathLike, extra: dict | None = None) -> int:
        header = {"kind": "tsan_checkpoint", "config": self.config.to_dict()}
        if extra:
            header.update(extra)
        return container.save(path, self.state_dict(), header)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "TSAN":
        entries, header = container.load(path)
        if "config" not in header:
            raise ConfigError(f"{path} has no model config in its header")
        model = cls(ModelConfig.from_dict(header["config"]))
        model.load_state_dict(entries)
        return model

    def check_input_width(self, width: int, window: int | None = None) -> None:
        mismatched = []
        if width != self.config.width:
            mismatched.append(f"width (model {self.config.width}, data {width})")
        if window is not None and window != self.config.window:
            mismatched.append(f"window (model {self.config.window}, data {window})")
        if mismatched:
            raise ConfigError("checkpoint/data mismatch: " + "; ".join(mismatched))

    # -- forward -----------------------------------------------------------

    def _p(self, path):
        return self.params[path]

    def _linear(self, prefix, x):
        return ops.linear(x, self._p(f"{prefix}.w"), self._p(f"{prefix}.b"))

    def temporal_forward(self, x, training: bool = False, rng=None):
        """``(B, w, f)`` -> ``(h_temp (B, d_model), [attention (B, heads, w, w)])``."""
        cfg = self.config
        x = x if isinstance(x, Tensor) else Tensor(x, dtype=self.dtype)
        if x.ndim != 3 or x.shape[1] != cfg.window or x.shape[2] != cfg.width:
            raise ShapeError(f"temporal input {x.shape} does not match (B, {cfg.window}, {cfg.width})")
        h = ops.add(self._linear("temporal.input_proj", x), self._p("temporal.pos_embedding"))
        attention = []
        for i in range(cfg.n_transformer_layers):
            p = f"temporal.block{i}"
            att, weights = multi_head_attention(
                h, self._p(f"{p}.attn.wq"), self._p(f"{p}.attn.wk"), self._p(f"{p}.attn.wv"),
                self._p(f"{p}.attn.wo"), cfg.n_heads_temporal)
            attention.append(weights.data)
            h = ops.layernorm(ops.add(h, att), self._p(f"{p}.ln1.gamma"), self._p(f"{p}.ln1.beta"),
                              cfg.layernorm_eps)
            ff = self._linear(f"{p}.ffn2", ops.relu(self._linear(f"{p}.ffn1", h)))
            h = ops.layernorm(ops.add(h, ff), self._p(f"{p}.ln2.gamma"), self._p(f"{p}.ln2.beta"),
                              cfg.layernorm_eps)
        return ops.mean(h, axis=1), attention

    def spatial_forward(self, x, training: bool = False, rng=None) -> Tensor:
        """``(B, f)`` -> ``h_spat (B, d_spat)``."""
        cfg = self.config
        x = x if isinstance(x, Tensor) else Tensor(x, dtype=self.dtype)
        if x.ndim != 2 or x.shape[1] != cfg.width:
            raise ShapeError(f"spatial input {x.shape} does not match (B, {cfg.width})")
        b = x.shape[0]
        h = ops.reshape(x, (b, cfg.width, 1))
        for i in range(len(cfg.conv_filters)):
            h = ops.conv1d(h, self._p(f"spatial.conv{i}.w"), self._p(f"spatial.conv{i}.b"))
            h = ops.maxpool1d(h, cfg.pool)
            h = ops.batchnorm1d(h, self._p(f"spatial.bn{i}.gamma"), self._p(f"spatial.bn{i}.beta"),
                                self.buffers[f"spatial.bn{i}.running_mean"],
                                self.buffers[f"spatial.bn{i}.running_var"],
                                training=training, momentum=cfg.batchnorm_momentum, eps=cfg.batchnorm_eps)
            h = ops.dropout(h, cfg.dropout, training, rng)
        h = ops.reshape(h, (b, -1))
        return ops.relu(self._linear("spatial.dense", h))

    def fuse(self, h_temp: Tensor | None, h_spat: Tensor | None):
        """Combine the encoder outputs into ``h_combined (B, d_combined)``.

        Returns ``(h_combined, attention)``; ``attention`` is
        ``(B, heads, T, T)`` with T the number of tokens, or None for
        concatenation fusion.
        """
        cfg = self.config
        tokens = []
        if h_temp is not None:
            tokens.append(self._linear("fusion.proj_temporal", h_temp))
        if h_spat is not None:
            tokens.append(self._linear("fusion.proj_spatial", h_spat))
        if cfg.fusion == "concat":
            pooled = ops.concat(tokens, axis=1)
            weights = None
        else:
            seq = ops.stack(tokens, axis=1)
            att, w = multi_head_attention(seq, self._p("fusion.attn.wq"), self._p("fusion.attn.wk"),
                                          self._p("fusion.attn.wv"), self._p("fusion.attn.wo"),
                                          cfg.n_heads_fusion)
            pooled = ops.mean(att, axis=1)
            weights = w.data
        return ops.relu(self._linear("fusion.combined", pooled)), weights

    def heads_forward(self, h_combined: Tensor) -> dict[str, Tensor]:
        return {
            "main": ops.sigmoid(self._linear("heads.main", h_combined)),
            "traffic": self._linear("heads.traffic", h_combined),
            "protocol": ops.softmax(self._linear("heads.protocol", h_combined)),
            "consistency": ops.sigmoid(self._linear("heads.consistency", h_combined)),
        }

    def forward(self, x_temporal, x_spatial, training: bool = False,
                rng: np.random.Generator | None = None) -> ForwardOutputs:
        cfg = self.config
        h_temp = h_spat = None
        temporal_attention = []
        if cfg.use_temporal:
            h_temp, temporal_attention = self.temporal_forward(x_temporal, training, rng)
        if cfg.use_spatial:
            h_spat = self.spatial_forward(x_spatial, training, rng)
        h_combined, fusion_attention = self.fuse(h_temp, h_spat)
        out = self.heads_forward(h_combined)
        return ForwardOutputs(out["main"], out["traffic"], out["protocol"], out["consistency"],
                              h_combined, h_temp, h_spat, temporal_attention, fusion_attention)

    __call__ = forward

    def predict_proba(self, x_temporal: np.ndarray, x_spatial: np.ndarray, batch: int = 512) -> np.ndarray:
        """Eval-mode DoS probabilities, shape ``(n,)``."""
        n = len(x_spatial)
        out = np.empty(n, dtype=np.float64)
        for start in range(0, n, batch):
            sl = slice(start, start + batch)
            res = self.forward(x_temporal[sl].astype(self.dtype), x_spatial[sl].astype(self.dtype))
            out[sl] = res.y_main.data[:, 0]
        return out

    def encoder_paths(self) -> list[str]:
        return [p for p in self.state_dict() if p.startswith(("temporal.", "spatial."))]


def build_model(config: ModelConfig, width: int | None = None, n_protocol: int | None = None,
                seed: int = 0, dtype=np.float32) -> TSAN:
    """Fill data-dependent config fields and construct the network."""
    changes = {}
    if width is not None:
        changes["width"] = width
    if n_protocol is not None:
        changes["n_protocol"] = n_protocol
    if changes:
        config = dataclasses.replace(config, **changes)
    return TSAN(config, seed=seed, dtype=dtype)
