"""Temporal-spatial attention network for DoS detection on NSL-KDD traffic."""

from .config import LossWeights, ModelConfig, PretrainConfig, RunConfig, TrainConfig
from .model import TSAN, ForwardOutputs, build_model, threshold_decision

__version__ = "0.1.0"

__all__ = [
    "ForwardOutputs",
    "LossWeights",
    "ModelConfig",
    "PretrainConfig",
    "RunConfig",
    "TSAN",
    "TrainConfig",
    "build_model",
    "threshold_decision",
]
