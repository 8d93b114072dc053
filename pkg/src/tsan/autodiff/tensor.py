"""Tensor value type, learnable parameters and the recording tape.

The engine is define-by-run: every primitive executed while a :class:`Tape`
is active (and touching at least one tensor that requires a gradient) is
appended to that tape together with a closure computing its vector-Jacobian
product. :meth:`Tape.backward` replays the records in reverse.

Example::

    with Tape() as tape:
        loss = ops.sum(ops.mul(p, p))
    tape.backward(loss, params=[p])
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractError, NumericalError

FLOAT_DTYPES = (np.float32, np.float64)

_TAPES: list["Tape"] = []


def _as_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, Tensor):
        data = data.data
    if dtype is not None:
        return np.ascontiguousarray(data, dtype=dtype)
    arr = np.asarray(data)
    # lists and Python scalars default to float32; float64 arrays are kept
    if isinstance(data, (np.ndarray, np.generic)) and arr.dtype.type in FLOAT_DTYPES:
        return arr
    return arr.astype(np.float32)


class Tensor:
    """Dense float array with an optional gradient slot.

    float32 is the working dtype. float64 arrays are kept as float64 so the
    gradient checker can run the same graph in double precision.
    """

    __slots__ = ("data", "requires_grad", "grad", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return len(self.data)

    # Operator sugar; the primitives live in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """A learnable tensor with a stable path and Adam moment buffers."""

    __slots__ = ("path", "adam_m", "adam_v", "step_count")

    def __init__(self, data, path: str, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.path = path
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0

    def __repr__(self):
        return f"Parameter({self.path!r}, shape={self.shape}, dtype={self.dtype})"

    def zero_grad(self):
        self.grad = None

    def astype(self, dtype) -> "Parameter":
        p = Parameter(self.data.astype(dtype), self.path)
        p.adam_m = self.adam_m.astype(dtype)
        p.adam_v = self.adam_v.astype(dtype)
        p.step_count = self.step_count
        return p


@dataclass
class _Record:
    output: Tensor
    inputs: tuple[Tensor, ...]
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    name: str


class Tape:
    """Ordered log of the primitives executed in one forward pass."""

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPES.pop()
        assert popped is self, "tapes must be exited in LIFO order"
        return False

    def __len__(self):
        return len(self.records)

    def record(self, output: Tensor, inputs, vjp, name: str) -> None:
        self.records.append(_Record(output, tuple(inputs), vjp, name))

    def backward(self, loss: Tensor, params: Iterable[Parameter] | None = None) -> dict[int, np.ndarray]:
        """Populate ``.grad`` on every leaf reachable from ``loss``.

        Parameters passed in ``params`` that the loss does not reach get a
        zero gradient, so an optimizer step over the whole collection is
        always well defined. Returns the raw id -> gradient map.
        """
        return backward(self, loss, params)


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def make_result(data: np.ndarray, inputs: Sequence, vjp, name: str) -> Tensor:
    """Wrap an op result, checking finiteness and recording it if needed."""
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"{name} produced non-finite values")
    tape = active_tape()
    tensors = [t for t in inputs if isinstance(t, Tensor)]
    track = tape is not None and any(t.requires_grad for t in tensors)
    out = Tensor(data, requires_grad=track)
    if track:
        tape.record(out, inputs, vjp, name)
    return out


def backward(tape: Tape, loss: Tensor, params: Iterable[Parameter] | None = None) -> dict[int, np.ndarray]:
    if not isinstance(loss, Tensor) or loss.size != 1:
        shape = getattr(loss, "shape", None)
        raise ContractError(f"backward needs a scalar loss, got shape {shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = set()
    leaves: dict[int, Tensor] = {}
    for rec in reversed(tape.records):
        produced.add(id(rec.output))
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        in_grads = rec.vjp(g)
        for inp, gi in zip(rec.inputs, in_grads):
            if gi is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
                leaves[key] = inp
    if id(loss) in grads and id(loss) not in produced:
        leaves[id(loss)] = loss
    for key, tensor in leaves.items():
        if key in grads and key not in produced:
            tensor.grad = np.asarray(grads[key], dtype=tensor.dtype).reshape(tensor.shape)
    if params is not None:
        for p in params:
            if id(p) not in grads or id(p) in produced:
                p.grad = np.zeros_like(p.data)
    return grads
