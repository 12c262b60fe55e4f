"""Finite-difference checks of every layer type and every network block.

Each block is a scalar loss of a few named tensors.  In float64 mode the
analytic gradient is checked directly; in float32 mode the backward pass runs
on float32 copies and is compared against the float64 numerical gradient.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import collab
from .autodiff import (Tensor, batch_norm, check_parameters, conv2d, conv2d_transpose, gru_sequence, ops)
from .autodiff.gradcheck import GradCheckReport
from .model.config import CASES, ModelConfig
from .model.network import decoder_forward, encoder_forward, frozen_running_stats, init_params
from .model.params import ParameterStore
from .pipeline import Features, estimate_waveform, istft_tensor, si_snr_tensor
from .signal import StftConfig

TOLERANCE = {"float64": 1e-6, "float32": 1e-4}
E2E_COUNT = 4  # entries per tensor in the end-to-end blocks; every tensor is still probed
E2E_FRAMES = 8
BLOCK_MIN = 20  # entries sampled per named block (or all of them if fewer)
GRAD_CONFIG = dict(n_freq=33, fc_dim=4, encoder_channels=(3, 4, 6), decoder_channels=(4, 3, 2))


@dataclass
class BlockResult:
    name: str
    max_rel_error: float
    tol: float
    checked: int
    worst: str

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error)) and self.max_rel_error < self.tol


def suite_config(case: int = 1, seed: int = 0) -> ModelConfig:
    """Toy-sized model used by the suite (small frequency axis keeps it quick)."""
    return ModelConfig.toy(seed=seed, **GRAD_CONFIG).with_case(case)


class _Block:
    """A loss over named float64 tensors; ``loss(tensors)`` must be a pure function of them."""

    def __init__(self, name: str, tensors: dict[str, np.ndarray], loss: Callable[[dict], Tensor],
                 max_count: int | None = None):
        self.name, self.values, self.loss = name, tensors, loss
        self.max_count = max_count

    def run(self, precision: str, tol: float, count: int, seed: int) -> BlockResult:
        ref = {k: Tensor(np.array(v, dtype=np.float64), requires_grad=True) for k, v in self.values.items()}
        analytic = None
        if precision == "float32":
            low = {k: Tensor(np.array(v, dtype=np.float32), requires_grad=True) for k, v in self.values.items()}
            self.loss(low).backward()
            analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)).astype(np.float64)
                        for k, t in low.items()}
        if self.max_count is not None:
            count = _block_counts(self.values, min(count, self.max_count))
        reports = check_parameters(lambda: self.loss(ref), ref, tol=tol, count=count, seed=seed, analytic=analytic)
        return _merge(self.name, reports, tol)


def _block_counts(values: dict, base: int, per_block: int = BLOCK_MIN) -> dict[str, int]:
    """``base`` entries per tensor, raised so each named block (e.g. ``enc.1``) gets ``per_block`` in total."""
    groups: dict[str, list[str]] = {}
    for k in values:
        groups.setdefault(".".join(k.split(".")[:2]), []).append(k)
    counts = {}
    for names in groups.values():
        want = max(base, -(-per_block // len(names)))
        for k in names:
            counts[k] = want
    return counts


def _merge(name: str, reports: dict[str, GradCheckReport], tol: float) -> BlockResult:
    worst_name = max(reports, key=lambda k: reports[k].max_rel_error)
    r = reports[worst_name]
    return BlockResult(name, r.max_rel_error, tol, sum(x.checked for x in reports.values()),
                       f"{worst_name}{list(r.worst_index) if r.worst_index is not None else ''}")


def _probe(rng, shape) -> np.ndarray:
    return rng.standard_normal(shape)


def _weighted(out: Tensor, probe: np.ndarray) -> Tensor:
    return ops.sum(out * Tensor(probe.astype(out.dtype)))


# -- layer blocks ----------------------------------------------------------------
def layer_blocks(seed: int = 0) -> list[_Block]:
    rng = np.random.default_rng(seed)
    blocks = []

    x = rng.standard_normal((2, 3, 5, 9))
    w = rng.standard_normal((4, 3, 3, 5)) * 0.3
    b = rng.standard_normal(4)
    p = _probe(rng, (2, 4, 5, 5))
    blocks.append(_Block("layer.conv2d", {"x": x, "w": w, "b": b},
                         lambda t, p=p: _weighted(conv2d(t["x"], t["w"], t["b"], (1, 2), (2, 2, 2)), p)))

    wt = rng.standard_normal((3, 2, 3, 5)) * 0.3
    bt = rng.standard_normal(2)
    p = _probe(rng, (2, 2, 5, 17))
    blocks.append(_Block("layer.conv2d_transpose", {"x": x, "w": wt, "b": bt},
                         lambda t, p=p: _weighted(conv2d_transpose(t["x"], t["w"], t["b"], (1, 2), 2, 17), p)))

    gamma, beta = 1.0 + 0.1 * rng.standard_normal(3), 0.1 * rng.standard_normal(3)
    p = _probe(rng, x.shape)
    for train in (True, False):
        rm, rv = 0.1 * rng.standard_normal(3), 1.0 + 0.1 * rng.random(3)
        blocks.append(_Block(f"layer.batch_norm.{'train' if train else 'infer'}", {"x": x, "g": gamma, "b": beta},
                             lambda t, train=train, rm=rm, rv=rv, p=p: _weighted(batch_norm(
                                 t["x"], t["g"], t["b"], rm.copy(), rv.copy(), train=train, update_stats=False), p)))

    alpha = np.array([0.25, -0.1, 0.4])
    p = _probe(rng, x.shape)
    blocks.append(_Block("layer.prelu", {"x": x, "a": alpha},
                         lambda t, p=p: _weighted(ops.prelu(t["x"], t["a"].reshape(1, -1, 1, 1)), p)))

    seq = rng.standard_normal((2, 6, 2))
    gw = {"W": rng.standard_normal((9, 2)) * 0.5, "U": rng.standard_normal((9, 3)) * 0.5,
          "b": rng.standard_normal(9) * 0.1}
    p = _probe(rng, (2, 6, 3))
    blocks.append(_Block("layer.gru", {"x": seq, **gw}, lambda t, p=p: _weighted(gru_sequence(t["x"], t), p)))

    a = rng.standard_normal((2, 5, 5))
    p = _probe(rng, a.shape)
    blocks.append(_Block("layer.softmax_causal",
                         {"a": a}, lambda t, p=p: _weighted(ops.softmax(t["a"], -1, mask=ops.causal_mask(5)), p)))

    m1, m2 = rng.standard_normal((2, 4, 3)), rng.standard_normal((3, 5))
    p = _probe(rng, (2, 4, 5))
    blocks.append(_Block("layer.matmul", {"a": m1, "b": m2}, lambda t, p=p: _weighted(t["a"] @ t["b"], p)))

    e = rng.standard_normal((3, 4))
    p = _probe(rng, e.shape)
    blocks.append(_Block("layer.elementwise", {"a": e, "b": rng.random((1, 4)) + 0.5},
                         lambda t, p=p: _weighted(ops.tanh(t["a"]) * ops.sigmoid(t["b"]) + ops.exp(t["a"] * 0.1)
                                             / (ops.sqrt(t["b"]) + 1.0) + ops.log(ops.square(t["b"]) + 1.0), p)))
    return blocks


# -- network blocks -------------------------------------------------------------------
def _store_block(name: str, params: ParameterStore, prefixes: tuple, loss: Callable[[dict], Tensor],
                 extra: dict | None = None, max_count: int | None = None) -> _Block:
    names = [k for k in params.params if k.startswith(prefixes)]
    values = {k: params[k].data.astype(np.float64) for k in names}
    values.update(extra or {})

    def bound(t: dict) -> Tensor:
        dtype = next(iter(t.values())).dtype
        store = params.astype(dtype)
        for k in names:
            store.params[k] = t[k]
        with frozen_running_stats():
            return loss({"store": store, **{k: v for k, v in t.items() if k not in names}})

    return _Block(name, values, bound, max_count)


def _features(cfg: ModelConfig, frames: int, rng) -> np.ndarray:
    return rng.standard_normal((1, cfg.in_channels, frames, cfg.n_freq))


def network_blocks(seed: int = 0, frames: int = 5, cases=tuple(CASES)) -> list[_Block]:
    rng = np.random.default_rng(seed + 1)
    blocks = []
    cfg = suite_config(1, seed)
    params = init_params(cfg, dtype=np.float64)
    feats = _features(cfg, frames, rng)
    c3, f3 = cfg.bottleneck_shape
    p_enc = _probe(rng, (1, c3, frames, f3))
    blocks.append(_store_block("encoder", params, ("enc.",),
                               lambda t: _weighted(encoder_forward(t["x"], t["store"], cfg, train=True)[0], p_enc),
                               {"x": feats}))

    with frozen_running_stats():
        _, skips = encoder_forward(Tensor(feats), params, cfg, train=True)
    bott = rng.standard_normal((1, c3, frames, f3))
    p_dec = _probe(rng, (1, 2, frames, cfg.n_freq))
    skip_vals = {f"skip{i}": s.data for i, s in enumerate(skips)}
    blocks.append(_store_block(
        "decoder", params, ("dec.",),
        lambda t: _weighted(decoder_forward(t["h"], [t[f"skip{i}"] for i in range(3)], t["store"], cfg, True), p_dec),
        {"h": bott, **skip_vals}))

    p_cm = _probe(rng, (1, c3, frames, f3))
    for case in cases:
        cc = suite_config(case, seed)
        cp = init_params(cc, dtype=np.float64)
        blocks.append(_store_block(f"cm.case{case}", cp, ("cm.",),
                                   lambda t, cc=cc: _weighted(collab.cm_forward(t["h"], t["store"], cc), p_cm),
                                   {"h": bott}))

    n = 256 * 3
    target = rng.standard_normal(n)
    st = StftConfig()
    spec_frames = st.n_frames(n)
    blocks.append(_Block("loss.istft_si_snr",
                         {"re": rng.standard_normal((1, spec_frames, 257)), "im": rng.standard_normal((1, spec_frames, 257))},
                         lambda t: -si_snr_tensor(istft_tensor(t["re"], t["im"], n), target[None]).sum()))

    for case in cases:
        blocks.append(_end_to_end(ModelConfig.toy(seed=seed).with_case(case), rng,
                                  n_samples=256 * (E2E_FRAMES - 1)))
    return blocks


def _end_to_end(cfg: ModelConfig, rng, n_samples: int, max_count: int = E2E_COUNT) -> _Block:
    """Full toy model: STFT features -> mask -> iSTFT -> negative SI-SNR."""
    from .signal import stft

    params = init_params(cfg, dtype=np.float64)
    st = StftConfig()
    mic, far, s = (rng.standard_normal(n_samples) for _ in range(3))
    Y, X = stft(mic, st), stft(far, st)
    planes = np.stack([X.real, X.imag, Y.real, Y.imag])[None]
    feats = Features(planes, Y.real[None], Y.imag[None], n_samples)

    def loss(t):
        store = t["store"]
        f = Features(feats.planes.astype(store.dtype), feats.y_real.astype(store.dtype),
                     feats.y_imag.astype(store.dtype), n_samples)
        est = estimate_waveform(f, store, cfg, train=True, stft_config=st)
        return -si_snr_tensor(est, s[None]).sum()

    return _store_block(f"model.case{cfg.case}", params, ("enc.", "cm.", "dec."), loss, max_count=max_count)


def run_suite(precision: str = "float64", tol: float | None = None, count: int = 6, seed: int = 0,
              blocks: list | None = None, on_result: Callable[[BlockResult, float], None] | None = None
              ) -> list[BlockResult]:
    """Check every block; ``count`` entries are sampled from each named tensor."""
    if precision not in TOLERANCE:
        raise ValueError(f"precision must be one of {sorted(TOLERANCE)}")
    tol = TOLERANCE[precision] if tol is None else tol
    blocks = blocks if blocks is not None else layer_blocks(seed) + network_blocks(seed)
    results = []
    for blk in blocks:
        t0 = time.perf_counter()
        res = blk.run(precision, tol, count, seed)
        results.append(res)
        if on_result is not None:
            on_result(res, time.perf_counter() - t0)
    return results


def format_report(results: list[BlockResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'block':<{width}}  {'max rel err':>12}  {'tol':>8}  {'n':>4}  status  worst"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.max_rel_error:12.3e}  {r.tol:8.0e}  {r.checked:4d}  "
                     f"{'PASS' if r.passed else 'FAIL':6}  {r.worst}")
    return "\n".join(lines) + "\n"
