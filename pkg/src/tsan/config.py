"""Configuration dataclasses and strict JSON loading.

Every field carries its default, so ``RunConfig.from_dict({})`` is a complete
run configuration. Unknown keys raise :class:`ConfigError` instead of being
silently ignored.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError


def _strict(cls, data: dict | None, where: str):
    data = dict(data or {})
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = _NESTED.get((cls.__name__, key))
        if sub is not None:
            value = _strict(sub, value, f"{where}.{key}")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class LossWeights:
    main: float = 1.0
    traffic: float = 0.3
    protocol: float = 0.3
    consistency: float = 0.4

    def __post_init__(self):
        for name in ("main", "traffic", "protocol", "consistency"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")

    def without_auxiliary(self) -> "LossWeights":
        return dataclasses.replace(self, traffic=0.0, protocol=0.0, consistency=0.0)


@dataclass(frozen=True)
class ModelConfig:
    window: int = 5
    width: int | None = None
    d_model: int = 128
    n_heads_temporal: int = 2
    n_transformer_layers: int = 1
    d_ff: int = 256
    conv_filters: tuple[int, ...] = (32, 64)
    conv_kernel: int = 3
    pool: int = 2
    dropout: float = 0.3
    d_spat: int = 128
    d_common: int = 64
    n_heads_fusion: int = 2
    d_combined: int = 64
    n_protocol: int = 3
    threshold: float = 0.5
    use_temporal: bool = True
    use_spatial: bool = True
    fusion: str = "attention"
    layernorm_eps: float = 1e-5
    batchnorm_eps: float = 1e-5
    batchnorm_momentum: float = 0.1

    def __post_init__(self):
        if self.d_model % self.n_heads_temporal:
            raise ConfigError(f"d_model={self.d_model} not divisible by n_heads_temporal={self.n_heads_temporal}")
        if self.d_common % self.n_heads_fusion:
            raise ConfigError(f"d_common={self.d_common} not divisible by n_heads_fusion={self.n_heads_fusion}")
        if self.fusion not in ("attention", "concat"):
            raise ConfigError(f"fusion must be 'attention' or 'concat', got {self.fusion!r}")
        if not (self.use_temporal or self.use_spatial):
            raise ConfigError("at least one encoder must be enabled")
        if self.fusion == "concat" and not (self.use_temporal and self.use_spatial):
            raise ConfigError("concat fusion needs both encoders")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.window < 1 or self.n_transformer_layers < 1:
            raise ConfigError("window and n_transformer_layers must be >= 1")
        object.__setattr__(self, "conv_filters", tuple(self.conv_filters))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["conv_filters"] = list(self.conv_filters)
        return d

    @classmethod
    def from_dict(cls, d: dict | None) -> "ModelConfig":
        return _strict(cls, d, "model")


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 3
    batch: int = 128
    lr: float = 1e-3

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("pretrain epochs must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch: int = 128
    max_epochs: int = 5
    patience: int | None = 2
    loss: LossWeights = field(default_factory=LossWeights)
    threshold: float = 0.5
    shuffle_fraction: float = 0.5

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be >= 1 (or null to disable early stopping)")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")


@dataclass(frozen=True)
class DataConfig:
    train_path: str = "KDDTrain+.txt"
    test_path: str = "KDDTest+.txt"
    window_size: int = 5
    stride: int = 2
    validation_fraction: float = 0.2
    seed: int = 0


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "runs"


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def seed(self) -> int:
        return self.data.seed

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        return _strict(cls, d, "config")

    @classmethod
    def load(cls, path: str | os.PathLike | None) -> "RunConfig":
        if path is None:
            return cls()
        with open(path) as fh:
            text = fh.read()
        try:
            raw = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(raw)

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        return dataclasses.replace(self, data=dataclasses.replace(self.data, seed=seed))

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["model"] = self.model.to_dict()
        return d


_NESTED = {
    ("RunConfig", "data"): DataConfig,
    ("RunConfig", "model"): ModelConfig,
    ("RunConfig", "pretrain"): PretrainConfig,
    ("RunConfig", "train"): TrainConfig,
    ("RunConfig", "output"): OutputConfig,
    ("TrainConfig", "loss"): LossWeights,
}
