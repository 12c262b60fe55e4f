"""Complex ratio mask target and its polar-form application."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stft import ComplexSpectrogram

DENOM_FLOOR = 1e-10
MAG_CLIP = 10.0


@dataclass
class CRMask:
    real: np.ndarray
    imag: np.ndarray

    @classmethod
    def from_polar(cls, mag: np.ndarray, phase: np.ndarray) -> "CRMask":
        return cls(mag * np.cos(phase), mag * np.sin(phase))

    @property
    def shape(self):
        return self.real.shape

    @property
    def mag(self) -> np.ndarray:
        return np.sqrt(self.real ** 2 + self.imag ** 2)

    @property
    def phase(self) -> np.ndarray:
        ph = np.arctan2(self.imag, self.real)
        return np.where(ph <= -np.pi, np.pi, ph)

    @property
    def complex(self) -> np.ndarray:
        return self.real + 1j * self.imag


def crm_compute(Y: ComplexSpectrogram, S: ComplexSpectrogram, clip: float = MAG_CLIP) -> CRMask:
    """Mask M with S = Y * M per bin; floored denominator, magnitude clipped to ``clip``."""
    if Y.shape != S.shape:
        raise ValueError(f"spectrogram shapes differ: {Y.shape} vs {S.shape}")
    den = np.maximum(Y.real ** 2 + Y.imag ** 2, DENOM_FLOOR)
    mr = (Y.real * S.real + Y.imag * S.imag) / den
    mi = (Y.real * S.imag - Y.imag * S.real) / den
    mag = np.hypot(mr, mi)
    shrink = np.where(mag > clip, clip / np.maximum(mag, 1e-300), 1.0)
    return CRMask(mr * shrink, mi * shrink)


def crm_apply(Y: ComplexSpectrogram, M: CRMask) -> ComplexSpectrogram:
    """Multiply magnitudes and add phases: |S| = |Y||M|, angle(S) = angle(Y) + angle(M)."""
    if Y.shape != M.shape:
        raise ValueError(f"mask shape {M.shape} does not match spectrogram {Y.shape}")
    mag = Y.magnitude * M.mag
    phase = Y.phase + M.phase
    return ComplexSpectrogram(mag * np.cos(phase), mag * np.sin(phase), Y.config, Y.length)
