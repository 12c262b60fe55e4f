"""Differentiable primitives: elementwise math, reductions, shape ops, matmul, softmax."""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor


def _broadcast_shape(a: tuple, b: tuple) -> tuple:
    try:
        return np.broadcast_shapes(a, b)
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast {a} with {b}") from exc


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    if lead:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _coerce(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return as_tensor(a), as_tensor(b)


# -- binary elementwise -------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _broadcast_shape(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return Tensor._make(a.data + b.data, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _broadcast_shape(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return Tensor._make(a.data - b.data, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _broadcast_shape(a.shape, b.shape)
    ad, bd = a.data, b.data

    def backward(g):
        return unbroadcast(g * bd, ad.shape), unbroadcast(g * ad, bd.shape)

    return Tensor._make(ad * bd, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _broadcast_shape(a.shape, b.shape)
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        return unbroadcast(g / bd, ad.shape), unbroadcast(-g * out / bd, bd.shape)

    return Tensor._make(out, (a, b), backward, "div")


def elementwise(kind: str, a, b=None, alpha=None) -> Tensor:
    """Dispatch by name; ``kind`` is one of the supported elementwise ops."""
    binary = {"add": add, "sub": sub, "mul": mul, "div": div}
    if kind in binary:
        return binary[kind](a, b)
    if kind == "prelu":
        return prelu(a, alpha)
    if kind == "scale":
        return scale(a, alpha)
    unary = {"sigmoid": sigmoid, "relu": relu, "tanh": tanh, "exp": exp, "log": log,
             "negate": negate, "sqrt": sqrt, "square": square}
    if kind not in unary:
        raise ValueError(f"unknown elementwise op {kind!r}")
    return unary[kind](a)


# -- unary elementwise --------------------------------------------------------
def negate(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._make(-a.data, (a,), lambda g: (-g,), "negate")


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    return Tensor._make(a.data * factor, (a,), lambda g: (g * factor,), "scale")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor._make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return Tensor._make(np.log(ad), (a,), lambda g: (g / ad,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return Tensor._make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return Tensor._make(ad * ad, (a,), lambda g: (2.0 * g * ad,), "square")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return Tensor._make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor._make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return Tensor._make(np.where(pos, a.data, 0.0).astype(a.dtype), (a,), lambda g: (g * pos,), "relu")


def prelu(a, alpha) -> Tensor:
    """Parametric ReLU; ``alpha`` broadcasts against ``a`` (scalar or per-channel)."""
    a = as_tensor(a)
    alpha = alpha if isinstance(alpha, Tensor) else Tensor(np.asarray(alpha, dtype=a.dtype))
    ad, al = a.data, alpha.data
    pos = ad > 0
    out = np.where(pos, ad, al * ad)

    def backward(g):
        ga = np.where(pos, g, g * al)
        galpha = unbroadcast(np.where(pos, 0.0, g * ad), al.shape)
        return ga, galpha

    return Tensor._make(out, (a, alpha), backward, "prelu")


# -- reductions ----------------------------------------------------------------
def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    shape = a.shape
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor._make(np.asarray(out), (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return scale(sum(a, axis=axes, keepdims=keepdims), 1.0 / count)


def mean_pool(a, axes) -> Tensor:
    """Arithmetic mean over ``axes``; those axes are removed."""
    a = as_tensor(a)
    for ax in (axes if isinstance(axes, (tuple, list)) else (axes,)):
        if not -a.ndim <= ax < a.ndim:
            raise ShapeError(f"axis {ax} out of range for shape {a.shape}")
    return mean(a, axis=axes)


def maximum_scalar(a, floor: float) -> Tensor:
    a = as_tensor(a)
    keep = a.data >= floor
    return Tensor._make(np.maximum(a.data, floor), (a,), lambda g: (g * keep,), "max_scalar")


def minimum_scalar(a, cap: float) -> Tensor:
    a = as_tensor(a)
    keep = a.data <= cap
    return Tensor._make(np.minimum(a.data, cap), (a,), lambda g: (g * keep,), "min_scalar")


# -- shape ops ----------------------------------------------------------------
def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return Tensor._make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return Tensor._make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, tuple(axes))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    shape, dtype = a.shape, a.dtype

    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return Tensor._make(np.array(a.data[idx]), (a,), backward, "getitem")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors)))

    return Tensor._make(out, tensors, backward, "concat")


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor._make(out, tensors, backward, "stack")


# -- linear algebra -------------------------------------------------------------
def matmul(a, b) -> Tensor:
    """Matrix product with numpy batching over leading dimensions."""
    a, b = _coerce(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"inner extents differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    try:
        out = ad @ bd
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return unbroadcast(ga, ad.shape), unbroadcast(gb, bd.shape)

    return Tensor._make(out, (a, b), backward, "matmul")


def causal_mask(n: int) -> np.ndarray:
    """Boolean (n, n) mask; True where query t may attend to key t' <= t."""
    return np.tril(np.ones((n, n), dtype=bool))


def softmax(a, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Numerically stable softmax.

    ``mask`` is boolean (True = keep) or additive with ``-inf`` entries.
    Rows with every entry masked come out as all zeros.
    """
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        mask = np.asarray(mask)
        keep = mask if mask.dtype == bool else np.isfinite(mask)
        keep = np.broadcast_to(keep, x.shape)
        x = np.where(keep, x, -np.inf)
    else:
        keep = None
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x - m)
    if keep is not None:
        e = np.where(keep, e, 0.0)
    z = e.sum(axis=axis, keepdims=True)
    out = np.divide(e, z, out=np.zeros_like(e), where=z > 0).astype(a.dtype, copy=False)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._make(out, (a,), backward, "softmax")
