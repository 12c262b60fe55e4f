"""Optimiser, clipping and the training loop."""
import numpy as np
import pytest

from cmnet.data import ScenarioSpec
from cmnet.model import ModelConfig, init_params, load_checkpoint
from cmnet.model.params import ParameterStore
from cmnet.train import (Adam, TrainConfig, TrainingError, clip_grad_norm, default_sampler, fixed_sampler, train,
                         write_loss_curve)

TOY = ModelConfig.toy()
FAST = TrainConfig(chunk_seconds=0.5, steps=3, seed=3)
DT = ScenarioSpec("DT", 0.0, None, 1.0, seed=7)


def _store(value):
    s = ParameterStore(np.float64)
    s.add("w", np.asarray(value, dtype=np.float64))
    return s


def test_adam_matches_reference_recursion(rng):
    w0 = rng.standard_normal(5)
    grads = [rng.standard_normal(5) for _ in range(4)]
    store = _store(w0)
    opt = Adam(store, lr=0.01, betas=(0.8, 0.9), eps=1e-8)
    w, m, v = w0.copy(), np.zeros(5), np.zeros(5)
    for t, g in enumerate(grads, start=1):
        store["w"].grad = g.copy()
        opt.step()
        m = 0.8 * m + 0.2 * g
        v = 0.9 * v + 0.1 * g * g
        w = w - 0.01 * (m / (1 - 0.8 ** t)) / (np.sqrt(v / (1 - 0.9 ** t)) + 1e-8)
    np.testing.assert_allclose(store["w"].data, w, atol=1e-14)


def test_adam_first_step_is_lr_times_sign(rng):
    store = _store(np.zeros(4))
    store["w"].grad = np.array([3.0, -0.2, 1e-3, -50.0])
    Adam(store, lr=0.1).step()
    np.testing.assert_allclose(store["w"].data, -0.1 * np.sign([3.0, -0.2, 1e-3, -50.0]), rtol=1e-4)


def test_clip_grad_norm(rng):
    s = ParameterStore(np.float64)
    s.add("a", np.zeros(3))
    s.add("b", np.zeros(4))
    s["a"].grad, s["b"].grad = np.array([3.0, 0, 0]), np.array([0, 4.0, 0, 0])
    assert clip_grad_norm(s, 1.0) == pytest.approx(5.0)
    np.testing.assert_allclose(s["a"].grad, [0.6, 0, 0])
    np.testing.assert_allclose(s["b"].grad, [0, 0.8, 0, 0])
    s["a"].grad, s["b"].grad = np.array([0.3, 0, 0]), np.zeros(4)
    clip_grad_norm(s, 1.0)
    np.testing.assert_array_equal(s["a"].grad, [0.3, 0, 0])


@pytest.mark.parametrize("kw", [dict(steps=0), dict(chunk_seconds=0), dict(batch_size=0)])
def test_train_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_sampler_is_seed_indexed():
    a, b = default_sampler(1.0, 5), default_sampler(1.0, 5)
    assert [a(i) for i in range(4)] == [b(i) for i in range(4)]
    assert fixed_sampler(DT)(9) is DT


def test_same_seed_same_loss_curve():
    r1 = train(TOY, FAST)
    r2 = train(TOY, FAST)
    assert r1.losses == r2.losses
    for k, p in r1.params.params.items():
        np.testing.assert_array_equal(p.data, r2.params[k].data)
    assert all(np.isfinite(r1.losses))


def test_skips_far_end_single_talk():
    seen = []

    def sampler(i):
        spec = ScenarioSpec("ST_FE", None, None, 1.0, seed=i) if i % 2 == 0 else ScenarioSpec("DT", 0.0, None, 1.0, seed=i)
        seen.append(spec.kind)
        return spec

    res = train(TOY, TrainConfig(chunk_seconds=0.5, steps=2), sampler)
    assert len(res.losses) == 2 and seen == ["ST_FE", "DT", "ST_FE", "DT"]


def test_loss_decreases_on_fixed_scenario():
    res = train(TOY, TrainConfig(chunk_seconds=1.0, steps=25, lr=1e-3), fixed_sampler(DT))
    assert np.mean(res.losses[-5:]) < res.losses[0]


def test_non_finite_loss_aborts_with_diagnostic():
    params = init_params(TOY, dtype=np.float32)
    params["dec.out.conv.weight"].data[...] = np.nan
    with pytest.raises(TrainingError, match=r"step 0 .*seeds \[7\]"):
        train(TOY, FAST, fixed_sampler(DT), params=params)


def test_checkpoints_and_loss_curve(tmp_path):
    res = train(TOY, TrainConfig(chunk_seconds=0.5, steps=4, checkpoint_every=2), fixed_sampler(DT), out_dir=tmp_path)
    assert [p.name for p in res.checkpoints] == ["step000002", "step000004", "final"]
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "step,loss" and len(lines) == 5
    assert float(lines[1].split(",")[1]) == pytest.approx(res.losses[0], rel=1e-7)
    params, cfg, meta = load_checkpoint(tmp_path / "final", expected=TOY)
    assert cfg == TOY
    for k, p in res.params.params.items():
        np.testing.assert_array_equal(params[k].data, p.data)


def test_write_loss_curve(tmp_path):
    write_loss_curve(tmp_path / "l.csv", [1.5, -2.25])
    assert (tmp_path / "l.csv").read_text() == "step,loss\n0,1.5\n1,-2.25\n"
