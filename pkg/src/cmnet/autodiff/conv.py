"""2-D convolution and transposed convolution over (batch, channel, time, freq) arrays.

Both are cross-correlations.  Time padding is applied on the past side only, and
the transposed convolution drops its future-side temporal overhang, so output
frame ``t`` never depends on input frames after ``t``.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, as_tensor


def _as4d(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return x.reshape((1,) + x.shape), True
    if x.ndim != 4:
        raise ShapeError(f"expected (C,T,F) or (B,C,T,F) input, got {x.shape}")
    return x, False


def _windows(xp: np.ndarray, kt: int, kf: int, st: int, sf: int) -> np.ndarray:
    # (B, C, T', F', kt, kf) strided view
    return sliding_window_view(xp, (kt, kf), axis=(2, 3))[:, :, ::st, ::sf]


def conv2d(x, weight, bias=None, stride=(1, 1), padding=(0, 0, 0)) -> Tensor:
    """Cross-correlate ``x`` with ``weight`` of shape (C_out, C_in, kT, kF).

    ``padding`` is (past_time, left_freq, right_freq) zeros.
    """
    x, squeeze = _as4d(as_tensor(x))
    weight = as_tensor(weight)
    st, sf = stride
    pt, pl, pr = padding
    co, ci, kt, kf = weight.shape
    b, c, t, f = x.shape
    if c != ci:
        raise ShapeError(f"input has {c} channels, kernel expects {ci}")
    if st < 1 or sf < 1 or min(pt, pl, pr) < 0:
        raise ShapeError(f"invalid stride {stride} / padding {padding}")
    tp, fp = t + pt, f + pl + pr
    if kt > tp or kf > fp:
        raise ShapeError(f"kernel {(kt, kf)} larger than padded input {(tp, fp)}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, 0), (pl, pr)))
    win = _windows(xp, kt, kf, st, sf)
    to, fo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * to * fo, ci * kt * kf)
    wmat = weight.data.reshape(co, -1)
    out = (cols @ wmat.T).reshape(b, to, fo, co).transpose(0, 3, 1, 2)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        parents.append(bias)
    out = np.ascontiguousarray(out)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, co)
        gw = (g2.T @ cols).reshape(weight.shape)
        dcols = (g2 @ wmat).reshape(b, to, fo, ci, kt, kf)
        dxp = np.zeros_like(xp)
        for i in range(kt):
            for j in range(kf):
                dxp[:, :, i:i + st * (to - 1) + 1:st, j:j + sf * (fo - 1) + 1:sf] += \
                    dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        gx = dxp[:, :, pt:, pl:pl + f]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    res = Tensor._make(out, parents, backward, "conv2d")
    return res.reshape(res.shape[1:]) if squeeze else res


def conv2d_transpose(x, weight, bias=None, stride=(1, 1), freq_crop: int = 0, out_freq: int | None = None) -> Tensor:
    """Transposed convolution with ``weight`` of shape (C_in, C_out, kT, kF).

    The full output is cropped to the first ``T * stride_t`` frames (dropping the
    future overhang) and to ``out_freq`` bins starting at ``freq_crop``.
    """
    x, squeeze = _as4d(as_tensor(x))
    weight = as_tensor(weight)
    st, sf = stride
    ci, co, kt, kf = weight.shape
    b, c, t, f = x.shape
    if c != ci:
        raise ShapeError(f"input has {c} channels, kernel expects {ci}")
    if kt < st:
        raise ShapeError("time kernel shorter than time stride leaves gaps")
    tf, ff = (t - 1) * st + kt, (f - 1) * sf + kf
    to = t * st
    if out_freq is None:
        out_freq = ff - 2 * freq_crop
    if freq_crop < 0 or out_freq < 1 or freq_crop + out_freq > ff:
        raise ShapeError(f"cannot crop {out_freq} bins at offset {freq_crop} from {ff}")
    x2 = x.data.transpose(0, 2, 3, 1).reshape(-1, ci)
    wmat = weight.data.reshape(ci, -1)
    cols = (x2 @ wmat).reshape(b, t, f, co, kt, kf)
    full = np.zeros((b, co, tf, ff), dtype=np.result_type(x.data, weight.data))
    for i in range(kt):
        for j in range(kf):
            full[:, :, i:i + st * (t - 1) + 1:st, j:j + sf * (f - 1) + 1:sf] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    out = full[:, :, :to, freq_crop:freq_crop + out_freq]
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        parents.append(bias)
    out = np.ascontiguousarray(out)

    def backward(g):
        gfull = np.zeros_like(full)
        gfull[:, :, :to, freq_crop:freq_crop + out_freq] = g
        win = _windows(gfull, kt, kf, st, sf)[:, :, :t, :f]
        dcols = win.transpose(0, 2, 3, 1, 4, 5).reshape(-1, co * kt * kf)
        gx = (dcols @ wmat.T).reshape(b, t, f, ci).transpose(0, 3, 1, 2)
        gw = (x2.T @ dcols).reshape(weight.shape)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    res = Tensor._make(out, parents, backward, "conv2d_transpose")
    return res.reshape(res.shape[1:]) if squeeze else res


def causal_padding(kernel: tuple[int, int]) -> tuple[int, int, int]:
    """Past-only time padding and symmetric frequency padding for an odd kernel."""
    kt, kf = kernel
    half = (kf - 1) // 2
    return (kt - 1, half, half)
