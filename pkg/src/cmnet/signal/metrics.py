"""SI-SNR, ERLE and level-ratio arithmetic."""
from __future__ import annotations

import numpy as np

SI_SNR_EPS = 1e-8  # relative to the estimate energy, so the metric stays scale-invariant
SI_SNR_TINY = 1e-30
SI_SNR_CAP = 60.0
ERLE_EPS = 1e-10
ERLE_CAP = 100.0
ACTIVE_THRESHOLD = 1e-4


def si_snr(est: np.ndarray, ref: np.ndarray) -> float:
    """Scale-invariant SNR in dB (no mean removal), capped at +60 dB."""
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {ref.shape}")
    if not np.any(ref):
        raise ValueError("SI-SNR undefined for an all-zero reference")
    target = np.dot(est, ref) * ref / (np.dot(ref, ref) + SI_SNR_EPS)
    noise = est - target
    floor = SI_SNR_EPS * np.dot(est, est) + SI_SNR_TINY
    val = 10.0 * np.log10((np.dot(target, target) + floor) / (np.dot(noise, noise) + floor))
    return float(min(val, SI_SNR_CAP))


def erle(mic: np.ndarray, est: np.ndarray) -> float:
    """Echo return loss enhancement in dB, capped at 100 dB."""
    mic = np.asarray(mic, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    if mic.shape != est.shape:
        raise ValueError(f"length mismatch: {mic.shape} vs {est.shape}")
    val = 10.0 * np.log10(np.dot(mic, mic) / (np.dot(est, est) + ERLE_EPS))
    return float(min(val, ERLE_CAP))


def active_power(x: np.ndarray) -> float:
    """Mean square over samples whose magnitude exceeds 1e-4 of the peak."""
    x = np.asarray(x, dtype=np.float64)
    peak = np.max(np.abs(x), initial=0.0)
    if peak == 0.0:
        raise ValueError("signal is silent")
    active = x[np.abs(x) > ACTIVE_THRESHOLD * peak]
    return float(np.mean(active ** 2))


def level_ratio_db(reference: np.ndarray, signal: np.ndarray) -> float:
    return 10.0 * np.log10(active_power(reference) / active_power(signal))


def scale_to_ratio(signal: np.ndarray, reference: np.ndarray, target_db: float) -> np.ndarray:
    """Scale ``signal`` so that 10 log10(P_reference / P_signal) equals ``target_db``.

    For SER the reference is near-end speech and the signal is echo; for SNR the
    signal is noise.
    """
    gain = np.sqrt(active_power(reference) / (active_power(signal) * 10.0 ** (target_db / 10.0)))
    return np.asarray(signal, dtype=np.float64) * gain
