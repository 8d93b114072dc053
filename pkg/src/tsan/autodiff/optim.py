"""Adam with bias correction, state kept on each Parameter."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from ..errors import ContractError
from .tensor import Parameter


def adam_step(params: Iterable[Parameter], lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Apply one Adam update to every parameter in place.

    Raises :class:`ContractError` if any parameter has no gradient; call
    ``Tape.backward(loss, params=...)`` first so unreachable parameters get
    an explicit zero gradient.
    """
    params = list(params)
    missing = [p.path for p in params if p.grad is None]
    if missing:
        raise ContractError(f"adam_step called before backward; no grad for {missing[:5]}")
    for p in params:
        g = p.grad
        p.step_count += 1
        t = p.step_count
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * (g * g)
        m_hat = p.adam_m / (1.0 - beta1 ** t)
        v_hat = p.adam_v / (1.0 - beta2 ** t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)


class Adam:
    """Thin holder for the hyperparameters of :func:`adam_step`."""

    def __init__(self, params: Iterable[Parameter], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self) -> None:
        adam_step(self.params, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
