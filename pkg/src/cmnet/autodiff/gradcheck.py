"""Central finite-difference verification of backward()."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, no_grad

FD_STEP = 1e-6
KINK_RATIO = 1e-5  # second difference relative to the first differences above which a probe straddles a kink
KINK_NOISE = 100.0  # ... and it must also exceed this many ulps of f(x), i.e. not be rounding noise
KINK_RETRIES = 2


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    checked: int
    worst_index: tuple | None = None
    failures: list[tuple] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error)) and self.max_rel_error < self.tol


def _scale(analytic: np.ndarray, numeric: np.ndarray) -> float:
    return max(float(np.max(np.abs(numeric), initial=0.0)), float(np.max(np.abs(analytic), initial=0.0)))


def _relative_errors(analytic: np.ndarray, numeric: np.ndarray, floor_ratio: float,
                     scale: float | None = None) -> np.ndarray:
    # entries far below the largest gradient are judged against that scale
    if scale is None:
        scale = _scale(analytic, numeric)
    floor = max(scale * floor_ratio, 1e-12)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def _central(f: Callable[[], Tensor], x: Tensor, idx: tuple, h: float) -> tuple[float, float]:
    orig = x.data[idx].copy()
    with no_grad():
        x.data[idx] = orig + h
        fp = float(f().data)
        x.data[idx] = orig - h
        fm = float(f().data)
    x.data[idx] = orig
    return fp, fm


def _numeric_grad(f: Callable[[], Tensor], x: Tensor, idx: tuple, h: float, f0: float | None = None) -> float:
    """Central difference; with ``f0`` given, a probe whose one-sided slopes disagree
    (it straddles a ReLU/PReLU kink) is repeated with a 10x smaller step."""
    fp, fm = _central(f, x, idx, h)
    noise = KINK_NOISE * np.finfo(np.float64).eps * abs(f0) if f0 is not None else 0.0
    for _ in range(KINK_RETRIES if f0 is not None else 0):
        d2 = abs(fp - 2.0 * f0 + fm)
        if d2 <= noise or d2 <= KINK_RATIO * (abs(fp - f0) + abs(f0 - fm)):
            break
        h /= 10.0
        fp, fm = _central(f, x, idx, h)
    return (fp - fm) / (2.0 * h)


def _pick(shape: tuple, count: int | None, rng: np.random.Generator) -> list[tuple]:
    total = int(np.prod(shape)) if shape else 1
    flat = np.arange(total) if count is None or count >= total else rng.choice(total, size=count, replace=False)
    return [tuple(int(k) for k in np.unravel_index(int(i), shape)) for i in flat]


def finite_difference_check(f: Callable[[Tensor], Tensor], x: Tensor, tol: float = 1e-6,
                            h: float = FD_STEP, count: int | None = None, seed: int = 0,
                            floor_ratio: float = 1e-2) -> GradCheckReport:
    """Compare backward() of scalar ``f(x)`` with central differences at ``x``."""
    x.requires_grad = True
    x.grad = None
    f(x).backward()
    analytic_full = x.grad if x.grad is not None else np.zeros_like(x.data)
    reports = check_parameters(lambda: f(x), {"x": x}, tol=tol, h=h, count=count, seed=seed,
                               floor_ratio=floor_ratio, analytic={"x": analytic_full})
    return reports["x"]


def check_parameters(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor], tol: float = 1e-6,
                     h: float = FD_STEP, count: int | Mapping[str, int] | None = 20, seed: int = 0,
                     floor_ratio: float = 1e-2, analytic: Mapping[str, np.ndarray] | None = None
                     ) -> dict[str, GradCheckReport]:
    """Finite-difference check of a random subset of entries of every named tensor.

    The relative-error floor is ``floor_ratio`` times the largest gradient seen
    across all tensors, so a tensor whose true gradient is zero (e.g. a bias
    feeding a training-mode batch norm) is judged against the block's scale.
    ``count`` may be a per-tensor mapping.  Probes that straddle a kink are
    detected from their second difference and repeated with a smaller step.
    """
    rng = np.random.default_rng(seed)
    if analytic is None:
        for p in params.values():
            p.requires_grad = True
            p.grad = None
        loss_fn().backward()
        analytic = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
    with no_grad():
        f0 = float(loss_fn().data)
    sampled = {}
    for name, p in params.items():
        idxs = _pick(p.shape, count[name] if isinstance(count, Mapping) else count, rng)
        a = np.array([analytic[name][i] for i in idxs], dtype=np.float64)
        n = np.array([_numeric_grad(loss_fn, p, i, h, f0) for i in idxs], dtype=np.float64)
        sampled[name] = (idxs, a, n)
    scale = max((_scale(a, n) for _, a, n in sampled.values()), default=0.0)
    reports = {}
    for name, (idxs, a, n) in sampled.items():
        err = _relative_errors(a, n, floor_ratio, scale)
        worst = int(np.argmax(err)) if err.size else None
        reports[name] = GradCheckReport(
            max_rel_error=float(err.max()) if err.size else 0.0,
            tol=tol,
            checked=len(idxs),
            worst_index=idxs[worst] if worst is not None else None,
            failures=[idxs[k] for k in np.flatnonzero(err >= tol)],
        )
    return reports
