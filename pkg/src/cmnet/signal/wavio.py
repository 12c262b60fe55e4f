"""Mono 16 kHz WAV input/output."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .stft import SAMPLE_RATE


class WavFormatError(ValueError):
    """File is not a mono 16 kHz 16-bit PCM or 32-bit float WAV."""


def read_wav(path, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    try:
        rate, data = wavfile.read(str(path))
    except (ValueError, OSError) as exc:
        raise WavFormatError(f"{path}: {exc}") from exc
    if rate != sample_rate:
        raise WavFormatError(f"{path}: sample rate {rate} Hz, expected {sample_rate} Hz")
    if data.ndim != 1:
        raise WavFormatError(f"{path}: {data.shape[1]} channels, expected mono")
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.float32:
        return data.astype(np.float64)
    raise WavFormatError(f"{path}: unsupported sample type {data.dtype}")


def write_wav(path, x: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    pcm = np.round(np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0) * 32767.0).astype(np.int16)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), sample_rate, pcm)
