"""Finite-difference gradient checking.

Relative error is ``|a - n| / max(|a|, |n|, floor)`` where ``a`` is the
analytic and ``n`` the central-difference estimate; the floor keeps
vanishing gradients from producing meaningless ratios. Checks run in
float64 so the difference quotient is not swamped by rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tape, Tensor

DEFAULT_TOL = 1e-3
DEFAULT_STEP = 1e-6
DEFAULT_FLOOR = 1e-6


def relative_error(analytic, numeric, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_gradient(f: Callable[[], float], array: np.ndarray, index, h: float = DEFAULT_STEP) -> float:
    """Central difference of ``f`` w.r.t. ``array[index]`` (perturbed in place)."""
    old = array[index]
    array[index] = old + h
    up = f()
    array[index] = old - h
    down = f()
    array[index] = old
    return (up - down) / (2.0 * h)


def check_function(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], h: float = DEFAULT_STEP,
                   seed: int = 0) -> float:
    """Max relative error of d(sum(fn(*inputs) * probe))/d(inputs) over every input element.

    A fixed random probe vector makes the scalar objective sensitive to
    every output element without tying the check to ``sum``.
    """
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = fn(*tensors)
        probe = np.random.default_rng(seed).standard_normal(out.shape)
        loss = (out * probe).sum()
    tape.backward(loss, params=None)

    def value():
        return float((fn(*[Tensor(a) for a in arrays]).data * probe).sum())

    worst = 0.0
    for t, a in zip(tensors, arrays):
        analytic = t.grad if t.grad is not None else np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            n = numeric_gradient(value, a, idx, h)
            worst = max(worst, float(relative_error(analytic[idx], n)))
    return worst


@dataclass
class GradcheckReport:
    max_rel_error: float
    checked: list[tuple[str, tuple, float, float, float]] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    tolerance: float = DEFAULT_TOL

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_rel_error": self.max_rel_error,
            "tolerance": self.tolerance,
            "failures": self.failures,
            "checked": [{"path": p, "index": list(i), "analytic": a, "numeric": n, "rel_error": r}
                        for p, i, a, n, r in self.checked],
        }
