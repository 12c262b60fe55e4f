"""Constant far-end delay estimation with GCC-PHAT."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stft import SAMPLE_RATE

PHAT_FLOOR = 1e-12
MIN_PEAK_TO_MEAN = 4.0


@dataclass
class Alignment:
    delay: int
    aligned: np.ndarray
    no_signal: bool = False
    peak_to_mean: float = float("inf")
    peak_outside_window: bool = False

    @property
    def low_confidence(self) -> bool:
        return not self.no_signal and (self.peak_to_mean < MIN_PEAK_TO_MEAN or self.peak_outside_window)


def gcc_phat(mic: np.ndarray, far: np.ndarray, max_lag: int) -> np.ndarray:
    """Phase-transform cross-correlation for non-negative lags 0..max_lag (mic lagging far)."""
    n = len(mic) + len(far)
    nfft = 1 << (n - 1).bit_length()
    cross = np.fft.rfft(mic, nfft) * np.conj(np.fft.rfft(far, nfft))
    cross /= np.maximum(np.abs(cross), PHAT_FLOOR)
    cc = np.fft.irfft(cross, nfft)
    return cc[:max_lag + 1]


def shift(x: np.ndarray, delay: int, length: int) -> np.ndarray:
    out = np.zeros(length, dtype=np.float64)
    n = max(0, min(length - delay, len(x)))
    out[delay:delay + n] = x[:n]
    return out


def gcc_phat_align(mic: np.ndarray, far: np.ndarray, max_delay_s: float = 0.5,
                   sample_rate: int = SAMPLE_RATE) -> Alignment:
    """Estimate one delay for the utterance and delay ``far`` to match ``mic``."""
    mic = np.asarray(mic, dtype=np.float64)
    far = np.asarray(far, dtype=np.float64)
    if not np.any(far) or not np.any(mic):
        return Alignment(0, shift(far, 0, len(mic)), no_signal=True)
    max_lag = min(int(round(max_delay_s * sample_rate)), len(mic) - 1)
    cc_all = gcc_phat(mic, far, len(mic) - 1)
    cc = cc_all[:max_lag + 1]
    delay = int(np.argmax(cc))
    mean_abs = float(np.mean(np.abs(cc)))
    ratio = float(cc[delay] / mean_abs) if mean_abs > 0 else float("inf")
    outside = bool(np.max(cc_all[max_lag + 1:], initial=-np.inf) > cc[delay])
    return Alignment(delay, shift(far, delay, len(mic)), peak_to_mean=ratio, peak_outside_window=outside)
