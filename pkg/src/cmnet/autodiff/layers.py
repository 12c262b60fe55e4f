"""Composite layers: batch normalisation and the GRU cell."""
from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tensor, as_tensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def batch_norm(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
               train: bool, momentum: float = BN_MOMENTUM, eps: float = BN_EPS,
               update_stats: bool = True) -> Tensor:
    """Per-channel normalisation of (C,T,F) or (B,C,T,F) input.

    Training mode normalises with batch statistics over every axis except the
    channel axis and updates the running statistics in place.  Inference mode
    uses the running statistics only, so each frame is processed independently.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    cax = x.ndim - 3
    axes = tuple(i for i in range(x.ndim) if i != cax)
    bshape = [1] * x.ndim
    bshape[cax] = -1
    bshape = tuple(bshape)
    gd, bd = gamma.data.reshape(bshape), beta.data.reshape(bshape)

    if not train:
        inv = 1.0 / np.sqrt(running_var.reshape(bshape) + eps)
        xhat = (x.data - running_mean.reshape(bshape)) * inv
        out = (gd * xhat + bd).astype(x.dtype, copy=False)

        def backward_infer(g):
            return g * gd * inv, (g * xhat).sum(axis=axes), g.sum(axis=axes)

        return Tensor._make(out, (x, gamma, beta), backward_infer, "batch_norm")

    n = x.size // x.shape[cax]
    mu = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gd * xhat + bd
    if update_stats:
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.reshape(-1)
        unbiased = var.reshape(-1) * (n / max(n - 1, 1))
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased

    def backward(g):
        gx_hat = g * gd
        gx = inv / n * (n * gx_hat - gx_hat.sum(axis=axes, keepdims=True)
                        - xhat * (gx_hat * xhat).sum(axis=axes, keepdims=True))
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return Tensor._make(out, (x, gamma, beta), backward, "batch_norm")


def gru_step(x_t, h_prev, weights) -> Tensor:
    """One GRU update.

    ``weights`` maps ``W`` (3H, I), ``U`` (3H, H) and ``b`` (3H,), gate order
    (update z, reset r, candidate)::

        z = sigmoid(W_z x + U_z h + b_z)
        r = sigmoid(W_r x + U_r h + b_r)
        c = tanh(W_h x + U_h (r * h) + b_h)
        h' = (1 - z) * h + z * c
    """
    W, U, b = (as_tensor(weights[k]) for k in ("W", "U", "b"))
    hidden = U.shape[1]
    x_t, h_prev = as_tensor(x_t), as_tensor(h_prev)
    xw = x_t @ ops.transpose(W) + b
    return _gru_update(xw, h_prev, _split_recurrent(U, hidden), hidden)


def _split_recurrent(U: Tensor, hidden: int):
    return ops.transpose(U[: 2 * hidden]), ops.transpose(U[2 * hidden:])


def _gru_update(xw: Tensor, h: Tensor, recurrent, hidden: int) -> Tensor:
    u_zr, u_h = recurrent
    hu = h @ u_zr
    z = ops.sigmoid(xw[..., :hidden] + hu[..., :hidden])
    r = ops.sigmoid(xw[..., hidden:2 * hidden] + hu[..., hidden:])
    cand = ops.tanh(xw[..., 2 * hidden:] + (r * h) @ u_h)
    return h + z * (cand - h)


def gru_sequence(xs, weights, h0=None) -> Tensor:
    """Run a unidirectional GRU over (B, T, I) input; returns hidden states (B, T, H)."""
    xs = as_tensor(xs)
    W, U, b = (as_tensor(weights[k]) for k in ("W", "U", "b"))
    hidden = U.shape[1]
    bsz, steps, _ = xs.shape
    xw = xs @ ops.transpose(W) + b
    recurrent = _split_recurrent(U, hidden)
    h = h0 if h0 is not None else Tensor(np.zeros((bsz, hidden), dtype=xs.dtype))
    outs = []
    for t in range(steps):
        h = _gru_update(xw[:, t], h, recurrent, hidden)
        outs.append(h)
    return ops.stack(outs, axis=1)
