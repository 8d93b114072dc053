"""Differentiable primitives.

Every function takes :class:`Tensor` (or array-like) inputs, computes the
forward value with numpy and registers a vector-Jacobian product on the
active tape. Shapes follow numpy broadcasting for the elementwise ops.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, ContractError, ShapeError
from .tensor import Tensor, make_result


def _t(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a = _t(a, b if isinstance(b, Tensor) else None)
    b = _t(b, a)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(out, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a = _t(a, b if isinstance(b, Tensor) else None)
    b = _t(b, a)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result(out, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a = _t(a, b if isinstance(b, Tensor) else None)
    b = _t(b, a)
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result(out, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a = _t(a, b if isinstance(b, Tensor) else None)
    b = _t(b, a)
    out = a.data / b.data

    def vjp(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_result(out, (a, b), vjp, "div")


def neg(a) -> Tensor:
    a = _t(a)
    return make_result(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a) -> Tensor:
    a = _t(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = _t(a)
    if np.any(a.data <= 0):
        raise ContractError("log of a non-positive value; clip the input first")
    out = np.log(a.data)
    return make_result(out, (a,), lambda g: (g / a.data,), "log")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; the gradient is zero where the clamp is active."""
    a = _t(a)
    out = np.clip(a.data, lo, hi)
    mask = (a.data >= lo) & (a.data <= hi)
    return make_result(out, (a,), lambda g: (g * mask,), "clip")


# ---------------------------------------------------------------------------
# reductions and shape manipulation


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = _t(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_result(np.asarray(out), (a,), vjp, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _t(a)
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[ax] for ax in axes]))

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).astype(a.dtype),)

    return make_result(np.asarray(out, dtype=a.dtype), (a,), vjp, "mean")


def reshape(a, shape) -> Tensor:
    a = _t(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.shape} to {tuple(shape)}") from exc
    return make_result(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes) -> Tensor:
    a = _t(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = np.transpose(a.data, axes)
    return make_result(out, (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_t(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_result(out, tuple(tensors), vjp, "concat")


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [_t(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return make_result(out, tuple(tensors), vjp, "stack")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """Matrix product with numpy's batching rules on the leading axes."""
    a = _t(a)
    b = _t(b, a)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_result(out, (a, b), vjp, "matmul")


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` over the last axis of ``x``."""
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def conv1d(x, w, b) -> Tensor:
    """Valid (unpadded) stride-1 convolution along the second-to-last axis.

    ``x`` is ``(..., L, c_in)``, ``w`` is ``(k, c_in, c_out)``, ``b`` is
    ``(c_out,)``; the result is ``(..., L - k + 1, c_out)`` with
    ``out[i, j] = sum_m sum_n x[i + m, n] * w[m, n, j] + b[j]``.
    """
    x, w, b = _t(x), _t(w), _t(b)
    if w.ndim != 3 or x.ndim < 2:
        raise ShapeError(f"conv1d expects x (..., L, c_in) and w (k, c_in, c_out); got {x.shape}, {w.shape}")
    k, c_in, c_out = w.shape
    length = x.shape[-2]
    if x.shape[-1] != c_in:
        raise ShapeError(f"conv1d channel mismatch: x {x.shape} vs w {w.shape}")
    if length < k:
        raise ShapeError(f"conv1d input length {length} shorter than kernel {k}")
    if b.shape != (c_out,):
        raise ShapeError(f"conv1d bias shape {b.shape} != ({c_out},)")
    n_out = length - k + 1
    cols = np.stack([x.data[..., m:m + n_out, :] for m in range(k)], axis=-2)
    cols = cols.reshape(cols.shape[:-2] + (k * c_in,))
    w2 = w.data.reshape(k * c_in, c_out)
    out = cols @ w2 + b.data

    def vjp(g):
        lead = g.ndim - 2
        gw = np.tensordot(cols, g, axes=(tuple(range(lead + 1)), tuple(range(lead + 1))))
        gb = g.reshape(-1, c_out).sum(axis=0)
        gcols = (g @ w2.T).reshape(g.shape[:-1] + (k, c_in))
        gx = np.zeros_like(x.data)
        for m in range(k):
            gx[..., m:m + n_out, :] += gcols[..., m, :]
        return gx, gw.reshape(w.shape), gb

    return make_result(out, (x, w, b), vjp, "conv1d")


def maxpool1d(x, window: int) -> Tensor:
    """Non-overlapping max pooling along the second-to-last axis.

    Trailing positions that do not fill a whole window are dropped. The
    gradient goes to the first maximal element of each window.
    """
    x = _t(x)
    if window < 1:
        raise ConfigError(f"pool window must be >= 1, got {window}")
    length, c = x.shape[-2], x.shape[-1]
    if window > length:
        raise ShapeError(f"pool window {window} larger than input length {length}")
    n_out = length // window
    lead = x.shape[:-2]
    blocks = x.data[..., : n_out * window, :].reshape(lead + (n_out, window, c))
    idx = np.argmax(blocks, axis=-2)
    out = np.take_along_axis(blocks, idx[..., None, :], axis=-2)[..., 0, :]

    def vjp(g):
        gblocks = np.zeros_like(blocks)
        np.put_along_axis(gblocks, idx[..., None, :], g[..., None, :], axis=-2)
        gx = np.zeros_like(x.data)
        gx[..., : n_out * window, :] = gblocks.reshape(lead + (n_out * window, c))
        return (gx,)

    return make_result(out, (x,), vjp, "maxpool1d")


# ---------------------------------------------------------------------------
# normalization


def _norm_backward(g_hat, x_hat, inv_std, axes, count):
    """Gradient through (x - mean) * inv_std where mean/var use ``axes``."""
    s1 = g_hat.sum(axis=axes, keepdims=True)
    s2 = (g_hat * x_hat).sum(axis=axes, keepdims=True)
    return inv_std * (g_hat - s1 / count - x_hat * s2 / count)


def layernorm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize each last-axis slice to zero mean / unit variance, then scale."""
    x, gamma, beta = _t(x), _t(gamma), _t(beta)
    d = x.shape[-1]
    if d == 1 and eps == 0:
        raise ContractError("layernorm over a single feature with eps=0 divides by zero")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mu) * inv_std
    out = x_hat * gamma.data + beta.data

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        g_gamma = (g * x_hat).sum(axis=lead)
        g_beta = g.sum(axis=lead)
        gx = _norm_backward(g * gamma.data, x_hat, inv_std, -1, d)
        return gx, g_gamma, g_beta

    return make_result(out, (x, gamma, beta), vjp, "layernorm")


def batchnorm1d(x, gamma, beta, running_mean: np.ndarray | None, running_var: np.ndarray | None,
                training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over every axis except the last.

    In training mode the batch statistics are used and the running buffers
    are updated in place: ``running = (1 - momentum) * running + momentum * batch``.
    In eval mode the running buffers are used and must exist.
    """
    x, gamma, beta = _t(x), _t(gamma), _t(beta)
    c = x.shape[-1]
    axes = tuple(range(x.ndim - 1))
    if training:
        count = int(np.prod([x.shape[a] for a in axes]))
        mu = x.data.mean(axis=axes, keepdims=True)
        var = x.data.var(axis=axes, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + eps)
        x_hat = (x.data - mu) * inv_std
        if running_mean is not None and running_var is not None:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu.reshape(c)
            running_var *= 1.0 - momentum
            running_var += momentum * var.reshape(c)
    else:
        if running_mean is None or running_var is None:
            raise ContractError("batchnorm eval mode before any running statistics exist")
        inv_std = (1.0 / np.sqrt(running_var + eps)).astype(x.dtype)
        x_hat = (x.data - running_mean.astype(x.dtype)) * inv_std
    out = x_hat * gamma.data + beta.data

    def vjp(g):
        g_gamma = (g * x_hat).sum(axis=axes)
        g_beta = g.sum(axis=axes)
        g_hat = g * gamma.data
        if training:
            gx = _norm_backward(g_hat, x_hat, inv_std, axes, count)
        else:
            gx = g_hat * inv_std
        return gx, g_gamma, g_beta

    return make_result(out, (x, gamma, beta), vjp, "batchnorm1d")


# ---------------------------------------------------------------------------
# activations and regularization


def relu(x) -> Tensor:
    x = _t(x)
    mask = x.data > 0
    return make_result(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def sigmoid(x) -> Tensor:
    x = _t(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return make_result(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softmax(x) -> Tensor:
    """Softmax over the last axis (max-subtracted)."""
    x = _t(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_result(out, (x,), vjp, "softmax")


def activation(x, kind: str) -> Tensor:
    kinds = {"relu": relu, "sigmoid": sigmoid, "softmax_lastaxis": softmax, "softmax": softmax}
    try:
        return kinds[kind](x)
    except KeyError:
        raise ConfigError(f"unknown activation {kind!r}") from None


def dropout(x, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; the identity when ``training`` is false or ``rate == 0``."""
    x = _t(x)
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("training-mode dropout needs a seeded generator")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return make_result(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def scaled_dot_attention(q, k, v):
    """softmax(q k^T / sqrt(d_k)) v over the last two axes.

    Returns ``(output, weights)``; ``weights`` is the tensor of attention
    rows so callers can inspect it.
    """
    d_k = q.shape[-1]
    scores = matmul(q, transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)))
    scores = mul(scores, 1.0 / math.sqrt(d_k))
    weights = softmax(scores)
    return matmul(weights, v), weights
