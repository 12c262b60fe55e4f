"""Adam training of the mask estimator with a negative SI-SNR objective."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import Mixture, ScenarioSpec, mix_scenario, sample_scenario
from .model.config import ModelConfig
from .model.network import init_params
from .model.params import ParameterStore, save_checkpoint
from .pipeline import estimate_waveform, make_features, si_snr_tensor

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Training diverged."""


@dataclass(frozen=True)
class TrainConfig:
    chunk_seconds: float = 10.0
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 1
    steps: int = 1000
    clip_norm: float = 5.0
    seed: int = 0
    checkpoint_every: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.chunk_seconds <= 0 or self.steps < 1 or self.batch_size < 1:
            raise ValueError("chunk length, step count and batch size must be positive")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, params: ParameterStore, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr, (self.b1, self.b2), self.eps = lr, betas, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.params.items()}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            update = self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            p.data -= update.astype(p.data.dtype)


def clip_grad_norm(params: ParameterStore, max_norm: float) -> float:
    """Rescale all gradients so their joint L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    grads = [p.grad for p in params.params.values() if p.grad is not None]
    total = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


def default_sampler(duration: float, base_seed: int) -> Callable[[int], ScenarioSpec]:
    """Seed-indexed draw from the training distribution: item i always gets the same scenario."""
    return lambda i: sample_scenario(base_seed + i, duration)


def fixed_sampler(spec: ScenarioSpec) -> Callable[[int], ScenarioSpec]:
    return lambda i: spec


@dataclass
class TrainResult:
    params: ParameterStore
    losses: list[float] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)


def _crop(m: Mixture, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return m.y[:n], m.x_aligned[:n], m.s[:n]


def train_step(params: ParameterStore, cfg: ModelConfig, mixtures: Sequence[Mixture], optim: Adam,
               tcfg: TrainConfig) -> float:
    n = min(int(round(tcfg.chunk_seconds * 16000)), min(len(m.y) for m in mixtures))
    ys, xs, ss = zip(*(_crop(m, n) for m in mixtures))
    feats = make_features(list(ys), list(xs), dtype=params.dtype)
    est = estimate_waveform(feats, params, cfg, train=True)
    loss = -si_snr_tensor(est, np.stack(ss)).mean()
    params.zero_grad()
    loss.backward()
    clip_grad_norm(params, tcfg.clip_norm)
    optim.step()
    return loss.item()


def train(cfg: ModelConfig, tcfg: TrainConfig, sampler: Callable[[int], ScenarioSpec] | None = None,
          out_dir=None, params: ParameterStore | None = None,
          on_step: Callable[[int, float], None] | None = None) -> TrainResult:
    """Run ``tcfg.steps`` Adam steps; item ``i`` of the data stream is ``sampler(i)``.

    Single-talk far-end items have no near-end target and are skipped by the
    default sampler (the objective is undefined for s = 0).
    """
    if sampler is None:
        sampler = default_sampler(tcfg.chunk_seconds, tcfg.seed)
    if params is None:
        params = init_params(cfg, dtype=np.dtype(tcfg.dtype))
    optim = Adam(params, tcfg.lr, tcfg.betas, tcfg.eps)
    result = TrainResult(params)
    out = Path(out_dir) if out_dir is not None else None
    item = 0
    for step in range(tcfg.steps):
        batch, seeds = [], []
        while len(batch) < tcfg.batch_size:
            spec = sampler(item)
            item += 1
            if spec.kind == "ST_FE":
                continue
            batch.append(mix_scenario(spec))
            seeds.append(spec.seed)
        loss = train_step(params, cfg, batch, optim, tcfg)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step} (scenario seeds {seeds})")
        result.losses.append(loss)
        log.info("step %d loss %.4f", step, loss)
        if on_step is not None:
            on_step(step, loss)
        if out is not None and tcfg.checkpoint_every and (step + 1) % tcfg.checkpoint_every == 0:
            result.checkpoints.append(save_checkpoint(out / f"step{step + 1:06d}", params, cfg, {"step": step + 1}))
    if out is not None:
        result.checkpoints.append(save_checkpoint(out / "final", params, cfg, {"step": tcfg.steps}))
        write_loss_curve(out / "loss.csv", result.losses)
    return result


def write_loss_curve(path, losses: Sequence[float]) -> None:
    lines = ["step,loss"] + [f"{i},{v:.8g}" for i, v in enumerate(losses)]
    Path(path).write_text("\n".join(lines) + "\n")
