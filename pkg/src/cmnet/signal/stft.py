"""Short-time Fourier analysis and weighted overlap-add synthesis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000


@dataclass(frozen=True)
class StftConfig:
    window_length: int = 512
    hop: int = 256
    fft_size: int = 512

    def __post_init__(self):
        if self.hop * 2 != self.window_length:
            raise ValueError("hop must be half the window length")
        if self.fft_size < self.window_length:
            raise ValueError("fft_size must be at least window_length")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def window(self) -> np.ndarray:
        return hamming(self.window_length)

    def n_frames(self, n_samples: int) -> int:
        return -(-n_samples // self.hop) + 1


def hamming(n: int) -> np.ndarray:
    """Periodic Hamming window (strictly positive)."""
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / n)


@dataclass
class ComplexSpectrogram:
    """T x F complex spectrogram stored as real and imaginary planes."""

    real: np.ndarray
    imag: np.ndarray
    config: StftConfig = StftConfig()
    length: int | None = None

    def __post_init__(self):
        if self.real.shape != self.imag.shape or self.real.ndim != 2:
            raise ValueError(f"real/imag planes must be matching 2-D arrays, got {self.real.shape}, {self.imag.shape}")
        if self.real.shape[1] != self.config.n_bins:
            raise ValueError(f"expected {self.config.n_bins} bins, got {self.real.shape[1]}")

    @classmethod
    def from_complex(cls, z: np.ndarray, config: StftConfig = StftConfig(), length: int | None = None):
        return cls(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag), config, length)

    @property
    def shape(self) -> tuple[int, int]:
        return self.real.shape

    @property
    def complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)

    @property
    def phase(self) -> np.ndarray:
        return np.arctan2(self.imag, self.real)


def frame_signal(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """(T, window_length) frames of ``x`` after ``window - hop`` leading zeros."""
    lead = cfg.window_length - cfg.hop
    n_frames = cfg.n_frames(len(x))
    total = (n_frames - 1) * cfg.hop + cfg.window_length
    xp = np.zeros(total, dtype=np.float64)
    xp[lead:lead + len(x)] = x
    idx = np.arange(cfg.window_length)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    return xp[idx]


def stft(x: np.ndarray, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("stft expects a mono waveform")
    if len(x) < cfg.window_length:
        raise ValueError(f"signal of {len(x)} samples is shorter than one window ({cfg.window_length})")
    frames = frame_signal(x, cfg) * cfg.window
    z = np.fft.rfft(frames, n=cfg.fft_size, axis=-1)
    return ComplexSpectrogram.from_complex(z, cfg, len(x))


def overlap_add(frames: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Sum (..., T, window) frames at hop spacing; relies on hop = window / 2."""
    hop = cfg.hop
    *lead, n_frames, _ = frames.shape
    out = np.zeros(tuple(lead) + ((n_frames + 1) * hop,), dtype=frames.dtype)
    out[..., :n_frames * hop] += frames[..., :hop].reshape(tuple(lead) + (-1,))
    out[..., hop:] += frames[..., hop:].reshape(tuple(lead) + (-1,))
    return out


def overlap_add_adjoint(signal: np.ndarray, cfg: StftConfig, n_frames: int) -> np.ndarray:
    """Transpose of :func:`overlap_add`: slice a (..., L) signal back into frames."""
    hop = cfg.hop
    lead = signal.shape[:-1]
    first = signal[..., :n_frames * hop].reshape(lead + (n_frames, hop))
    second = signal[..., hop:(n_frames + 1) * hop].reshape(lead + (n_frames, hop))
    return np.concatenate([first, second], axis=-1)


def synthesis_envelope(cfg: StftConfig, n_frames: int) -> np.ndarray:
    return overlap_add(np.broadcast_to(cfg.window ** 2, (n_frames, cfg.window_length)), cfg)


def istft(spec: ComplexSpectrogram, length: int | None = None) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`."""
    cfg = spec.config
    n_frames = spec.shape[0]
    frames = np.fft.irfft(spec.complex, n=cfg.fft_size, axis=-1)[:, :cfg.window_length] * cfg.window
    out = overlap_add(frames, cfg) / synthesis_envelope(cfg, n_frames)
    lead = cfg.window_length - cfg.hop
    if length is None:
        length = spec.length if spec.length is not None else (n_frames - 1) * cfg.hop
    return out[lead:lead + length]
