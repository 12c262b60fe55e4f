"""Seeded synthetic scenarios: pseudo-speech, echo paths and y = d + s + v mixtures."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import signal as sps

from .model.config import ConfigError
from .signal import SAMPLE_RATE, Alignment, gcc_phat_align, scale_to_ratio

KINDS = ("DT", "ST_NE", "ST_FE")
NONLINEARITIES = ("none", "hard_clip", "arctan")
NOISE_KINDS = ("white", "lowpass")
CLIP_LEVEL = 0.6
UNVOICED_LEVEL = 0.05


def _rng(seed, *salt) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *salt]))


def synth_speechlike(duration: float, seed: int, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Harmonic pseudo-speech with a syllabic on/off envelope, peak 0.5."""
    if duration < 0.5:
        raise ValueError("pseudo-speech needs at least 0.5 s")
    rng = _rng(seed, 1)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = rng.uniform(80.0, 300.0)
    drift = 1.0 + 0.06 * np.sin(2 * np.pi * rng.uniform(0.2, 1.0) * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * f0 * np.cumsum(drift) / sample_rate
    n_harm = int(rng.integers(3, 6))
    x = np.zeros(n)
    for h in range(1, n_harm + 1):
        x += rng.uniform(0.3, 1.0) / h * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    # low-level unvoiced component keeps the spectrum broadband between harmonics
    x += UNVOICED_LEVEL * rng.standard_normal(n)
    rate = rng.uniform(2.0, 8.0)
    env = np.maximum(np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)), 0.0) ** 2
    x *= env
    return 0.5 * x / np.max(np.abs(x))


@dataclass(frozen=True)
class EchoPath:
    rir_length_s: float = 0.064
    decay: float = 40.0  # amplitude decay rate of the tail, 1/s
    nonlinearity: str = "none"
    delay_samples: int = 160
    tail_gain: float = 0.3

    def __post_init__(self):
        if self.nonlinearity not in NONLINEARITIES:
            raise ConfigError(f"nonlinearity must be one of {NONLINEARITIES}")
        if self.rir_length_s <= 0 or self.delay_samples < 0:
            raise ConfigError("RIR length must be positive and delay non-negative")

    def rir(self, seed: int, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
        """Bulk delay then a positive unit first tap followed by a decaying noise tail."""
        rng = _rng(seed, 2)
        n = max(1, int(round(self.rir_length_s * sample_rate)))
        tail = rng.standard_normal(n) * np.exp(-self.decay * np.arange(n) / sample_rate)
        tail *= self.tail_gain / max(np.max(np.abs(tail[1:]), initial=0.0), 1e-12)
        tail[0] = 1.0
        return np.concatenate([np.zeros(self.delay_samples), tail])


def apply_nonlinearity(x: np.ndarray, kind: str) -> np.ndarray:
    level = CLIP_LEVEL * np.max(np.abs(x), initial=0.0)
    if kind == "none" or level == 0.0:
        return x.copy()
    if kind == "hard_clip":
        return np.clip(x, -level, level)
    if kind == "arctan":
        return level * (2.0 / np.pi) * np.arctan(x * (np.pi / 2.0) / level)
    raise ConfigError(f"unknown nonlinearity {kind!r}")


def synth_echo(x: np.ndarray, path: EchoPath = EchoPath(), seed: int = 0, rir: np.ndarray | None = None) -> np.ndarray:
    """d = RIR * g(x), truncated to len(x)."""
    x = np.asarray(x, dtype=np.float64)
    h = path.rir(seed) if rir is None else np.asarray(rir, dtype=np.float64)
    return sps.convolve(apply_nonlinearity(x, path.nonlinearity), h)[:len(x)]


def synth_noise(n: int, kind: str, seed: int) -> np.ndarray:
    rng = _rng(seed, 3)
    v = rng.standard_normal(n)
    if kind == "lowpass":
        b, a = sps.butter(2, 2000.0 / (SAMPLE_RATE / 2))
        v = sps.lfilter(b, a, v)
    elif kind != "white":
        raise ConfigError(f"noise kind must be one of {NOISE_KINDS}")
    return v


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "DT"
    ser_db: float | None = 0.0
    snr_db: float | None = None
    duration: float = 2.0
    echo: EchoPath = field(default_factory=EchoPath)
    noise_kind: str = "white"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"scenario kind must be one of {KINDS}")
        if self.kind == "DT":
            if self.ser_db is None or not -15.0 <= self.ser_db <= 15.0:
                raise ConfigError("double-talk needs an SER in [-15, 15] dB")
        elif self.ser_db is not None:
            raise ConfigError(f"{self.kind} is single-talk; an SER is meaningless")
        if self.noise_kind not in NOISE_KINDS:
            raise ConfigError(f"noise kind must be one of {NOISE_KINDS}")
        if self.duration < 0.5:
            raise ConfigError("scenario duration must be at least 0.5 s")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        echo = d.pop("echo", {})
        return cls(echo=EchoPath(**echo) if isinstance(echo, dict) else echo, **d)


@dataclass
class Mixture:
    spec: ScenarioSpec
    y: np.ndarray
    s: np.ndarray
    x: np.ndarray
    d: np.ndarray
    v: np.ndarray
    alignment: Alignment

    @property
    def x_aligned(self) -> np.ndarray:
        return self.alignment.aligned


def mix_scenario(spec: ScenarioSpec) -> Mixture:
    """Generate s, x, d and v for ``spec`` and sum them into the microphone signal."""
    n = int(round(spec.duration * SAMPLE_RATE))
    zeros = np.zeros(n)
    s = synth_speechlike(spec.duration, spec.seed * 4 + 1)[:n] if spec.kind != "ST_FE" else zeros.copy()
    x = synth_speechlike(spec.duration, spec.seed * 4 + 2)[:n] if spec.kind != "ST_NE" else zeros.copy()
    d = synth_echo(x, spec.echo, seed=spec.seed) if spec.kind != "ST_NE" else zeros.copy()
    if spec.kind == "DT":
        d = scale_to_ratio(d, s, spec.ser_db)
    if spec.snr_db is not None:
        v = scale_to_ratio(synth_noise(n, spec.noise_kind, spec.seed), s if spec.kind != "ST_FE" else d, spec.snr_db)
    else:
        v = zeros.copy()
    y = d + s + v
    return Mixture(spec, y, s, x, d, v, gcc_phat_align(y, x))


def sample_scenario(seed: int, duration: float, kinds=KINDS) -> ScenarioSpec:
    """Draw a scenario from the training distribution (SER uniform in [-15, 15] dB for DT)."""
    rng = _rng(seed, 4)
    kind = kinds[int(rng.integers(len(kinds)))]
    echo = EchoPath(
        rir_length_s=float(rng.uniform(0.03, 0.1)),
        decay=float(rng.uniform(20.0, 60.0)),
        nonlinearity=NONLINEARITIES[int(rng.integers(3))],
        delay_samples=int(rng.integers(0, 800)),
    )
    ser = float(rng.uniform(-15.0, 15.0)) if kind == "DT" else None
    if kind == "DT":
        snr = 5.0 if rng.random() < 0.5 else None
    else:
        snr = 5.0 if kind == "ST_NE" else None
    noise = NOISE_KINDS[int(rng.integers(2))]
    return ScenarioSpec(kind, ser, snr, duration, echo, noise, seed)


def scenario_set(n_per_kind: int, duration: float, seed: int) -> list[ScenarioSpec]:
    """Evaluation set with ``n_per_kind`` scenarios of each kind."""
    out = []
    for i, kind in enumerate(KINDS):
        for j in range(n_per_kind):
            out.append(sample_scenario(seed + 1000 * i + j, duration, kinds=(kind,)))
    return out
