"""Minimal reverse-mode autodiff engine used by the TSAN model."""

from . import ops
from .optim import Adam, adam_step
from .tensor import Parameter, Tape, Tensor, active_tape, backward

__all__ = ["Adam", "Parameter", "Tape", "Tensor", "active_tape", "adam_step", "backward", "ops"]
