"""Collaboration module: target-positive/negative feature catchers and their interactive fusion.

All tensors are (B, C, T, F').  Attention runs over time only, with frequency
folded into the per-frame feature vector, and is causally masked so frame ``t``
only attends to frames ``<= t``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .autodiff import Tensor, conv2d, gru_sequence, no_grad, ops
from .autodiff.conv import causal_padding
from .autodiff.tensor import ShapeError
from .model.config import ConfigError, ModelConfig
from .model.params import ParameterStore, add_conv, add_gru, add_linear
from .trace import Trace


# -- parameters -----------------------------------------------------------------
def init_fc(store: ParameterStore, rng, name: str, channels: int, n_freq: int, dim: int) -> None:
    folded = channels * n_freq
    for proj in ("key", "value", "query"):
        add_linear(store, rng, f"{name}.{proj}", folded, dim)
    add_linear(store, rng, f"{name}.out", dim, folded)


def init_cm(store: ParameterStore, rng, cfg: ModelConfig, prefix: str = "cm") -> None:
    c, f = cfg.bottleneck_shape
    if cfg.case == 5:
        for i in range(2):
            init_fc(store, rng, f"{prefix}.sa{i}", c, f, cfg.fc_dim)
        return
    add_conv(store, rng, f"{prefix}.mask.conv1", c, c, cfg.cm_kernel)
    add_conv(store, rng, f"{prefix}.mask.conv2", c, c, cfg.cm_kernel)
    if cfg.tpb:
        init_fc(store, rng, f"{prefix}.fc_tp", c, f, cfg.fc_dim)
    if cfg.tnb:
        init_fc(store, rng, f"{prefix}.fc_tn", c, f, cfg.fc_dim)
    if cfg.ib:
        add_gru(store, rng, f"{prefix}.gru_tp", 1, cfg.gru_hidden)
        add_gru(store, rng, f"{prefix}.gru_tn", 1, cfg.gru_hidden)


# -- masks ----------------------------------------------------------------------
def _snap_unit(m: Tensor) -> Tensor:
    # put values on the 2**-52 grid so 1 - m is exact and complement is an involution
    snapped = (m.data + 1.0) - 1.0
    return Tensor._make(snapped, (m,), lambda g: (g,), "snap_unit")


def conv_block_mask(f_in: Tensor, params: ParameterStore, prefix: str = "cm.mask",
                    kernel: tuple = (3, 7)) -> Tensor:
    """Sigmoid(Conv(ReLU(Conv(F_in)))) with causal (3, 7) kernels, channel count preserved."""
    pad = causal_padding(kernel)
    h = conv2d(f_in, params[f"{prefix}.conv1.weight"], params[f"{prefix}.conv1.bias"], (1, 1), pad)
    h = conv2d(ops.relu(h), params[f"{prefix}.conv2.weight"], params[f"{prefix}.conv2.bias"], (1, 1), pad)
    return _snap_unit(ops.sigmoid(h))


def complement_mask(m_tp):
    """1 - M_tp."""
    if isinstance(m_tp, Tensor):
        return 1.0 - m_tp
    return 1.0 - np.asarray(m_tp)


# -- feature catcher ------------------------------------------------------------
def _fold(x: Tensor) -> Tensor:
    b, c, t, f = x.shape
    return ops.transpose(x, (0, 2, 1, 3)).reshape(b, t, c * f)


def _unfold(x: Tensor, c: int, f: int) -> Tensor:
    b, t, _ = x.shape
    return ops.transpose(x.reshape(b, t, c, f), (0, 2, 1, 3))


def _project(x: Tensor, params: ParameterStore, name: str) -> Tensor:
    return x @ params[f"{name}.weight"] + params[f"{name}.bias"]


def fc_block(f_in: Tensor, mask: Tensor | None, params: ParameterStore, prefix: str,
             trace: Trace | None = None) -> Tensor:
    """Feature catcher: global self-attention followed by mask-guided local attention.

    K, V and Q are per-frame projections of the frequency-folded features; the
    query path sees ``mask * F_in`` (or ``F_in`` when ``mask`` is None).
    """
    if mask is not None and mask.shape != f_in.shape:
        raise ShapeError(f"mask {mask.shape} does not match features {f_in.shape}")
    _, c, t, f = f_in.shape
    if trace is not None:
        trace.fc_calls += 1
    folded = _fold(f_in)
    k = _project(folded, params, f"{prefix}.key")
    v = _project(folded, params, f"{prefix}.value")
    dim = k.shape[-1]
    causal = ops.causal_mask(t)
    scale = 1.0 / np.sqrt(dim)
    x_attn = ops.softmax(ops.scale(k @ ops.swapaxes(v, -1, -2), scale), axis=-1, mask=causal)
    g = x_attn @ v
    local = f_in if mask is None else mask * f_in
    q = _project(_fold(local), params, f"{prefix}.query")
    y_attn = ops.softmax(ops.scale(q @ ops.swapaxes(g, -1, -2), scale), axis=-1, mask=causal)
    out = _project(y_attn @ g, params, f"{prefix}.out")
    if trace is not None:
        trace.keep(f"{prefix}.x_attn", x_attn)
        trace.keep(f"{prefix}.y_attn", y_attn)
    return _unfold(out, c, f) + f_in


# -- interactive block --------------------------------------------------------------
def selection_weights(f_tp: Tensor, f_tn: Tensor, params: ParameterStore, prefix: str = "cm") -> Tensor:
    """Per-frame (w_tp, w_tn) as a (B, T, 2) tensor whose last axis sums to 1."""
    pooled = ops.mean_pool(f_tp + f_tn, axes=(1, 3))
    b, t = pooled.shape
    seq = pooled.reshape(b, t, 1)
    h_tp = gru_sequence(seq, _gru(params, f"{prefix}.gru_tp"))
    h_tn = gru_sequence(seq, _gru(params, f"{prefix}.gru_tn"))
    return ops.softmax(ops.concat([h_tp, h_tn], axis=-1), axis=-1)


def _gru(params: ParameterStore, name: str) -> dict:
    return {k: params[f"{name}.{k}"] for k in ("W", "U", "b")}


def interactive_block(f_tp: Tensor, f_tn: Tensor, params: ParameterStore, prefix: str = "cm",
                      trace: Trace | None = None) -> Tensor:
    if f_tp.shape != f_tn.shape:
        raise ShapeError(f"branch shapes differ: {f_tp.shape} vs {f_tn.shape}")
    w = selection_weights(f_tp, f_tn, params, prefix)
    b, t, _ = w.shape
    w_tp = w[:, :, 0].reshape(b, 1, t, 1)
    w_tn = w[:, :, 1].reshape(b, 1, t, 1)
    if trace is not None:
        trace.keep("w_tp", w[:, :, 0])
        trace.keep("w_tn", w[:, :, 1])
    return w_tp * f_tp + w_tn * f_tn


# -- module ---------------------------------------------------------------------
def cm_forward(f_in: Tensor, params: ParameterStore, cfg: ModelConfig, prefix: str = "cm",
               trace: Trace | None = None) -> Tensor:
    """Apply the ablation case selected by ``cfg``; output shape equals input shape."""
    if cfg.ib and not (cfg.tpb and cfg.tnb):
        raise ConfigError("interactive block requires both branches")
    if cfg.case == 5:
        out = f_in
        for i in range(2):
            out = fc_block(out, None, params, f"{prefix}.sa{i}", trace)
        return out
    m_tp = conv_block_mask(f_in, params, f"{prefix}.mask", cfg.cm_kernel)
    m_tn = complement_mask(m_tp)
    if trace is not None:
        trace.keep("m_tp", m_tp)
        trace.keep("m_tn", m_tn)
    f_tp = fc_block(f_in, m_tp, params, f"{prefix}.fc_tp", trace) if cfg.tpb else None
    f_tn = fc_block(f_in, m_tn, params, f"{prefix}.fc_tn", trace) if cfg.tnb else None
    if cfg.ib:
        return interactive_block(f_tp, f_tn, params, prefix, trace)
    if f_tp is not None and f_tn is not None:
        return f_tp + f_tn
    return f_tp if f_tp is not None else f_tn


def dump_attention_maps(f_in, params: ParameterStore, cfg: ModelConfig, path, prefix: str = "cm") -> dict[str, Path]:
    """Write channel-averaged M_tp / M_tn grids (rows = frames, columns = bins) as text."""
    if cfg.case == 5:
        raise ConfigError("case 5 has no target-positive/negative masks to dump")
    x = f_in if isinstance(f_in, Tensor) else Tensor(np.asarray(f_in, dtype=params.dtype))
    if x.ndim == 3:
        x = x.reshape((1,) + x.shape)
    with no_grad():
        m_tp = conv_block_mask(x, params, f"{prefix}.mask", cfg.cm_kernel)
    grid_tp = m_tp.data[0].mean(axis=0)
    grid_tn = complement_mask(m_tp.data)[0].mean(axis=0)
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    files = {"m_tp": out / "m_tp.csv", "m_tn": out / "m_tn.csv"}
    np.savetxt(files["m_tp"], grid_tp, fmt="%.6g", delimiter=",")
    np.savetxt(files["m_tn"], grid_tn, fmt="%.6g", delimiter=",")
    return files
