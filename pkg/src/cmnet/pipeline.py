"""Mask -> waveform path shared by training, evaluation and the CLI.

Training needs the whole chain differentiable: complex mask multiplication,
inverse STFT and the SI-SNR objective are expressed on autodiff tensors here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, no_grad, ops
from .model.config import ModelConfig
from .model.network import forward, stack_planes
from .model.params import ParameterStore
from .signal import (Alignment, ComplexSpectrogram, CRMask, StftConfig, crm_apply, gcc_phat_align, istft,
                     stft)
from .signal.metrics import SI_SNR_EPS, SI_SNR_TINY
from .signal.stft import overlap_add, overlap_add_adjoint, synthesis_envelope


def apply_mask(y_real, y_imag, mask: Tensor) -> tuple[Tensor, Tensor]:
    """Complex product Y * M for (B, T, F) planes and a (B, 2, T, F) mask."""
    mr, mi = mask[:, 0], mask[:, 1]
    return mr * y_real - mi * y_imag, mr * y_imag + mi * y_real


def istft_tensor(real: Tensor, imag: Tensor, length: int, cfg: StftConfig = StftConfig()) -> Tensor:
    """Differentiable inverse STFT of (B, T, F) planes -> (B, length) waveforms."""
    n_frames = real.shape[-2]
    n = cfg.fft_size
    win = cfg.window
    env = synthesis_envelope(cfg, n_frames)
    lead = cfg.window_length - cfg.hop
    frames = np.fft.irfft(real.data + 1j * imag.data, n=n, axis=-1)[..., :cfg.window_length] * win
    out = (overlap_add(frames, cfg) / env)[..., lead:lead + length]
    weight = np.full(cfg.n_bins, 2.0 / n)
    weight[0] = 1.0 / n
    if n % 2 == 0:
        weight[-1] = 1.0 / n

    def backward(g):
        full = np.zeros(g.shape[:-1] + (env.shape[0],), dtype=np.float64)
        full[..., lead:lead + length] = g
        gframes = overlap_add_adjoint(full / env, cfg, n_frames) * win
        spec = np.fft.rfft(gframes, n=n, axis=-1) * weight
        dt = real.dtype
        return spec.real.astype(dt), spec.imag.astype(dt)

    return Tensor._make(out.astype(real.dtype), (real, imag), backward, "istft")


def si_snr_tensor(est: Tensor, ref: np.ndarray) -> Tensor:
    """Per-item SI-SNR in dB (no cap) for (B, N) estimates against constant references."""
    ref = np.asarray(ref, dtype=est.dtype)
    ref_energy = (ref * ref).sum(axis=-1, keepdims=True)
    coef = ops.sum(est * ref, axis=-1, keepdims=True) / (ref_energy + SI_SNR_EPS)
    target = coef * ref
    noise = est - target
    floor = ops.scale(ops.sum(ops.square(est), axis=-1), SI_SNR_EPS) + SI_SNR_TINY
    num = ops.sum(ops.square(target), axis=-1) + floor
    den = ops.sum(ops.square(noise), axis=-1) + floor
    return ops.scale(ops.log(num) - ops.log(den), 10.0 / np.log(10.0))


@dataclass
class Features:
    """Network input and the microphone spectrogram for one or more utterances."""

    planes: np.ndarray  # (B, 4, T, F)
    y_real: np.ndarray  # (B, T, F)
    y_imag: np.ndarray
    length: int


def make_features(mics: list[np.ndarray], fars_aligned: list[np.ndarray], dtype=np.float32,
                  cfg: StftConfig = StftConfig()) -> Features:
    planes, yr, yi = [], [], []
    for mic, far in zip(mics, fars_aligned):
        Y, X = stft(mic, cfg), stft(far, cfg)
        planes.append(stack_planes(X, Y, dtype))
        yr.append(Y.real.astype(dtype))
        yi.append(Y.imag.astype(dtype))
    return Features(np.stack(planes), np.stack(yr), np.stack(yi), len(mics[0]))


def estimate_waveform(feats: Features, params: ParameterStore, cfg: ModelConfig, train: bool,
                      trace=None, stft_config: StftConfig = StftConfig()) -> Tensor:
    """Differentiable (B, N) near-end estimate."""
    mask = forward(Tensor(feats.planes.astype(params.dtype, copy=False)), params, cfg, train, trace)
    sr, si = apply_mask(Tensor(feats.y_real), Tensor(feats.y_imag), mask)
    return istft_tensor(sr, si, feats.length, stft_config)


@dataclass
class Enhanced:
    estimate: np.ndarray
    mask: CRMask
    alignment: Alignment


def enhance(mic: np.ndarray, far: np.ndarray, params: ParameterStore, cfg: ModelConfig,
            alignment: Alignment | None = None, mask_fn=None, trace=None) -> Enhanced:
    """Inference: align -> STFT -> mask -> polar application -> inverse STFT.

    ``mask_fn(Y, X)`` overrides the network (used for oracle-mask baselines).
    """
    mic = np.asarray(mic, dtype=np.float64)
    if alignment is None:
        alignment = gcc_phat_align(mic, far)
    Y = stft(mic)
    X = stft(alignment.aligned)
    if mask_fn is not None:
        mask = mask_fn(Y, X)
    else:
        planes = Tensor(stack_planes(X, Y, params.dtype)[None])
        with no_grad():
            m = forward(planes, params, cfg, train=False, trace=trace)
        mask = CRMask(m.data[0, 0].astype(np.float64), m.data[0, 1].astype(np.float64))
    est = istft(crm_apply(Y, mask), len(mic))
    return Enhanced(est, mask, alignment)


def oracle_mask(target: np.ndarray):
    """mask_fn returning the ideal complex ratio mask for ``target``."""
    from .signal import crm_compute

    S = stft(target)

    def fn(Y: ComplexSpectrogram, X: ComplexSpectrogram) -> CRMask:
        return crm_compute(Y, S)

    return fn
