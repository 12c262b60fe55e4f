"""Causal encoder, gated decoder and the end-to-end mask estimator.

Every convolution except the first encoder layer is preceded by batch norm and
PReLU (norm -> activation -> conv).  The raw four-plane spectrogram input goes
straight into the first convolution.
"""
from __future__ import annotations

import contextlib

import numpy as np

from .. import collab
from ..autodiff import Tensor, batch_norm, conv2d, conv2d_transpose, no_grad, ops
from ..autodiff.conv import causal_padding
from ..autodiff.tensor import ShapeError
from ..trace import Trace
from ..signal import ComplexSpectrogram, CRMask
from .config import ModelConfig
from .params import ParameterStore, add_conv, add_deconv, add_norm_act


OUTPUT_GAIN = 0.05


def init_params(cfg: ModelConfig, dtype=np.float64, seed: int | None = None) -> ParameterStore:
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    store = ParameterStore(dtype)
    chans = (cfg.in_channels,) + cfg.encoder_channels
    for i in range(3):
        if i > 0:
            add_norm_act(store, f"enc.{i}", chans[i])
        add_conv(store, rng, f"enc.{i}.conv", chans[i + 1], chans[i], cfg.encoder_kernel)
    collab.init_cm(store, rng, cfg)
    deep = cfg.encoder_channels[-1]
    for i, c_out in enumerate(cfg.decoder_channels):
        c_skip = cfg.encoder_channels[_skip_index(i)]
        add_norm_act(store, f"dec.{i}.in", deep)
        add_deconv(store, rng, f"dec.{i}.deconv", deep, c_out, cfg.decoder_kernel)
        add_norm_act(store, f"dec.{i}.gate_in", c_out)
        add_conv(store, rng, f"dec.{i}.gate", c_skip, c_out, cfg.pointwise_kernel)
        add_norm_act(store, f"dec.{i}.fuse_in", c_skip + c_out)
        add_conv(store, rng, f"dec.{i}.fuse", c_out, c_skip + c_out, cfg.pointwise_kernel)
        deep = c_out
    add_norm_act(store, "dec.out.in", deep)
    add_conv(store, rng, "dec.out.conv", 2, deep, cfg.pointwise_kernel)
    # start close to a pass-through mask (1 + 0j) so an untrained model leaves y mostly intact
    store["dec.out.conv.weight"].data *= OUTPUT_GAIN
    store["dec.out.conv.bias"].data[0] = 1.0
    return store


def zero_output_layer(params: ParameterStore) -> None:
    """Zero the final pointwise conv so the initial mask (and estimate) is exactly zero."""
    for k in ("dec.out.conv.weight", "dec.out.conv.bias"):
        params[k].data[...] = 0.0


def _skip_index(block: int) -> int:
    # gated block i gates the encoder output with the same frequency extent:
    # block 0 -> stage 1 (F/2), blocks 1 and 2 -> stage 0 (full F)
    return (1, 0, 0)[block]


def norm_act(x: Tensor, params: ParameterStore, name: str, train: bool) -> Tensor:
    y = batch_norm(x, params[f"{name}.bn.gamma"], params[f"{name}.bn.beta"],
                   params.buffer(f"{name}.bn.running_mean"), params.buffer(f"{name}.bn.running_var"),
                   train=train, update_stats=train and _UPDATE_STATS[0])
    alpha = params[f"{name}.prelu.alpha"]
    return ops.prelu(y, alpha.reshape(1, -1, 1, 1))


# cleared by frozen_running_stats()
_UPDATE_STATS = [True]


@contextlib.contextmanager
def frozen_running_stats():
    """Training-mode batch norm without touching the running statistics."""
    prev = _UPDATE_STATS[0]
    _UPDATE_STATS[0] = False
    try:
        yield
    finally:
        _UPDATE_STATS[0] = prev


def _conv(x, params, name, stride=(1, 1), padding=(0, 0, 0)):
    return conv2d(x, params[f"{name}.weight"], params[f"{name}.bias"], stride, padding)


def encoder_forward(x: Tensor, params: ParameterStore, cfg: ModelConfig, train: bool = False,
                    trace: Trace | None = None) -> tuple[Tensor, list[Tensor]]:
    """(B, 4, T, F) -> bottleneck (B, C3, T, F3) and the three stage outputs."""
    if x.shape[1] != cfg.in_channels:
        raise ShapeError(f"encoder expects {cfg.in_channels} input planes, got {x.shape[1]}")
    if x.shape[3] != cfg.n_freq:
        raise ShapeError(f"encoder expects {cfg.n_freq} bins, got {x.shape[3]}")
    pad = causal_padding(cfg.encoder_kernel)
    skips = []
    h = x
    for i, stride in enumerate(cfg.encoder_strides):
        if i > 0:
            h = norm_act(h, params, f"enc.{i}", train)
        h = _conv(h, params, f"enc.{i}.conv", stride, pad)
        if trace is not None:
            trace.shape(f"enc.{i}", h)
        skips.append(h)
    return h, skips


def gated_block_forward(deep: Tensor, skip: Tensor, params: ParameterStore, cfg: ModelConfig, block: int,
                        train: bool = False, trace: Trace | None = None) -> Tensor:
    """Deconvolve, gate the encoder skip with a learned sigmoid mask, fuse both."""
    name = f"dec.{block}"
    kf = cfg.decoder_kernel[1]
    sf = cfg.decoder_strides[block][1]
    natural = (deep.shape[3] - 1) * sf + kf - 2 * ((kf - 1) // 2)
    if skip.shape[3] not in (natural, natural - 1):
        raise ShapeError(f"{name}: deconv yields {natural} bins, skip has {skip.shape[3]}")
    u = conv2d_transpose(norm_act(deep, params, f"{name}.in", train), params[f"{name}.deconv.weight"],
                         params[f"{name}.deconv.bias"], cfg.decoder_strides[block],
                         freq_crop=(kf - 1) // 2, out_freq=skip.shape[3])
    if u.shape[2:] != skip.shape[2:]:
        raise ShapeError(f"deconv output {u.shape} does not match skip {skip.shape}")
    gate = ops.sigmoid(_conv(norm_act(u, params, f"{name}.gate_in", train), params, f"{name}.gate"))
    if trace is not None:
        trace.keep(f"{name}.gate", gate)
    fused = ops.concat([gate * skip, u], axis=1)
    out = _conv(norm_act(fused, params, f"{name}.fuse_in", train), params, f"{name}.fuse")
    if trace is not None:
        trace.shape(name, out)
    return out


def decoder_forward(bottleneck: Tensor, skips: list[Tensor], params: ParameterStore, cfg: ModelConfig,
                    train: bool = False, trace: Trace | None = None) -> Tensor:
    """Three gated blocks and a pointwise conv; returns the unbounded (B, 2, T, F) mask."""
    h = bottleneck
    for i in range(3):
        h = gated_block_forward(h, skips[_skip_index(i)], params, cfg, i, train, trace)
    mask = _conv(norm_act(h, params, "dec.out.in", train), params, "dec.out.conv")
    if trace is not None:
        trace.shape("dec.out", mask)
    return mask


def forward(features: Tensor, params: ParameterStore, cfg: ModelConfig, train: bool = False,
            trace: Trace | None = None) -> Tensor:
    """(B, 4, T, F) stacked [X_r, X_i, Y_r, Y_i] planes -> (B, 2, T, F) mask planes."""
    if features.ndim == 3:
        features = features.reshape((1,) + features.shape)
    bottleneck, skips = encoder_forward(features, params, cfg, train, trace)
    if trace is not None:
        trace.keep("cm.in", bottleneck)
    h = collab.cm_forward(bottleneck, params, cfg, trace=trace)
    if trace is not None:
        trace.shape("cm", h)
    return decoder_forward(h, skips, params, cfg, train, trace)


def stack_planes(X, Y, dtype=np.float64) -> np.ndarray:
    """Far-end and microphone spectrograms as a (4, T, F) array [X_r, X_i, Y_r, Y_i]."""
    if X.shape != Y.shape:
        raise ValueError(f"far-end {X.shape} and microphone {Y.shape} spectrograms differ in shape")
    return np.stack([X.real, X.imag, Y.real, Y.imag]).astype(dtype)


def cmnet_forward(X: ComplexSpectrogram, Y: ComplexSpectrogram, params: ParameterStore, cfg: ModelConfig,
                  train: bool = False, trace: Trace | None = None) -> CRMask:
    feats = Tensor(stack_planes(X, Y, params.dtype))
    with no_grad():
        m = forward(feats, params, cfg, train, trace)
    return CRMask(m.data[0, 0].astype(np.float64), m.data[0, 1].astype(np.float64))
