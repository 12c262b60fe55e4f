"""Architecture hyperparameters, including the ablation toggles."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace


class ConfigError(ValueError):
    """Inconsistent or unsupported configuration."""


# ablation cases: (target-positive block, target-negative block, interactive block)
CASES = {
    1: (True, True, True),
    2: (True, False, False),
    3: (False, True, False),
    4: (True, True, False),
    5: (False, False, False),
}


def _pairs(v):
    return tuple(tuple(int(a) for a in p) for p in v)


@dataclass(frozen=True)
class ModelConfig:
    encoder_channels: tuple = (16, 32, 64)
    encoder_kernel: tuple = (3, 5)
    encoder_strides: tuple = ((1, 1), (1, 2), (1, 2))
    decoder_channels: tuple = (32, 16, 2)
    decoder_kernel: tuple = (3, 5)
    decoder_strides: tuple = ((1, 2), (1, 2), (1, 1))
    pointwise_kernel: tuple = (1, 1)
    cm_kernel: tuple = (3, 7)
    cm_stride: tuple = (1, 1)
    fc_kernel: tuple = (1, 1)
    fc_dim: int = 64
    gru_hidden: int = 1
    tpb: bool = True
    tnb: bool = True
    ib: bool = True
    n_freq: int = 257
    in_channels: int = 4
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "encoder_channels", tuple(int(c) for c in self.encoder_channels))
        object.__setattr__(self, "decoder_channels", tuple(int(c) for c in self.decoder_channels))
        object.__setattr__(self, "encoder_strides", _pairs(self.encoder_strides))
        object.__setattr__(self, "decoder_strides", _pairs(self.decoder_strides))
        for name in ("encoder_kernel", "decoder_kernel", "pointwise_kernel", "cm_kernel", "cm_stride", "fc_kernel"):
            object.__setattr__(self, name, tuple(int(a) for a in getattr(self, name)))
        for name in ("encoder_channels", "encoder_strides", "decoder_channels", "decoder_strides"):
            if len(getattr(self, name)) != 3:
                raise ConfigError(f"{name} must have 3 entries")
        if self.decoder_channels[-1] != 2:
            raise ConfigError("the last decoder stage must emit 2 channels (real and imaginary mask)")
        if any(s[0] != 1 for s in self.encoder_strides + self.decoder_strides):
            raise ConfigError("time stride must be 1 everywhere")
        if self.cm_stride != (1, 1) or self.fc_kernel != (1, 1) or self.pointwise_kernel != (1, 1):
            raise ConfigError("collaboration-module and decoder pointwise convs are stride/kernel (1, 1)")
        if self.ib and not (self.tpb and self.tnb):
            raise ConfigError("the interactive block needs both the target-positive and target-negative blocks")
        if self.gru_hidden != 1:
            raise ConfigError("per-frame selection weights need GRU hidden size 1")
        if self.freq_extents()[-1] < 1:
            raise ConfigError(f"n_freq={self.n_freq} too small for the encoder strides")

    # -- ablation -------------------------------------------------------------
    @property
    def case(self) -> int:
        toggles = (self.tpb, self.tnb, self.ib)
        return next(k for k, v in CASES.items() if v == toggles)

    def with_case(self, case: int) -> "ModelConfig":
        if case not in CASES:
            raise ConfigError(f"unknown ablation case {case}; expected 1-5")
        tpb, tnb, ib = CASES[case]
        return replace(self, tpb=tpb, tnb=tnb, ib=ib)

    @classmethod
    def toy(cls, **overrides) -> "ModelConfig":
        """Small configuration for tests and desk-scale training."""
        base = dict(encoder_channels=(4, 8, 16), decoder_channels=(8, 4, 2), fc_dim=8)
        base.update(overrides)
        return cls(**base)

    # -- geometry ---------------------------------------------------------------
    def freq_extents(self) -> list[int]:
        """Bins at the input and after each encoder stage, e.g. [257, 257, 129, 65]."""
        ext = [self.n_freq]
        kf = self.encoder_kernel[1]
        pad = (kf - 1) // 2
        for _, sf in self.encoder_strides:
            ext.append((ext[-1] + 2 * pad - kf) // sf + 1)
        return ext

    @property
    def bottleneck_shape(self) -> tuple[int, int]:
        return self.encoder_channels[-1], self.freq_extents()[-1]

    # -- serialisation ------------------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**known)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
