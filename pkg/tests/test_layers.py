"""Batch normalisation and the GRU cell."""
import numpy as np
import pytest

from cmnet.autodiff import Tensor, batch_norm, check_parameters, gru_sequence, gru_step, ops


class TestBatchNorm:
    def test_training_output_is_normalised(self, rng):
        x = rng.standard_normal((3, 4, 5, 6)) * 3 + 2
        out = batch_norm(Tensor(x), Tensor(np.ones(4)), Tensor(np.zeros(4)), np.zeros(4), np.ones(4), train=True).data
        np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, rtol=1e-4)

    def test_running_stats_update(self, rng):
        x = rng.standard_normal((2, 3, 4, 5)) + 1.0
        rm, rv = np.zeros(3), np.ones(3)
        batch_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), rm, rv, train=True, momentum=0.1)
        mu = x.mean(axis=(0, 2, 3))
        var_unbiased = x.var(axis=(0, 2, 3), ddof=1)
        np.testing.assert_allclose(rm, 0.1 * mu)
        np.testing.assert_allclose(rv, 0.9 + 0.1 * var_unbiased)

    def test_update_can_be_suppressed(self, rng):
        rm, rv = np.zeros(3), np.ones(3)
        batch_norm(Tensor(rng.standard_normal((1, 3, 2, 2))), Tensor(np.ones(3)), Tensor(np.zeros(3)), rm, rv,
                   train=True, update_stats=False)
        np.testing.assert_array_equal(rm, 0.0)
        np.testing.assert_array_equal(rv, 1.0)

    def test_inference_is_affine_and_framewise(self, rng):
        x = rng.standard_normal((1, 2, 6, 3))
        rm, rv = np.array([0.5, -1.0]), np.array([2.0, 0.5])
        g, b = np.array([1.5, 0.5]), np.array([0.1, -0.2])
        out = batch_norm(Tensor(x), Tensor(g), Tensor(b), rm, rv, train=False).data
        ref = g[None, :, None, None] * (x - rm[None, :, None, None]) / np.sqrt(rv[None, :, None, None] + 1e-5) \
            + b[None, :, None, None]
        np.testing.assert_allclose(out, ref)
        y = x.copy()
        y[:, :, 3:] = 100.0
        np.testing.assert_array_equal(batch_norm(Tensor(y), Tensor(g), Tensor(b), rm, rv, train=False).data[:, :, :3],
                                      out[:, :, :3])

    @pytest.mark.parametrize("train", [True, False])
    def test_gradients(self, train, rng):
        x = Tensor(rng.standard_normal((2, 3, 4, 5)))
        g = Tensor(1.0 + 0.1 * rng.standard_normal(3))
        b = Tensor(0.1 * rng.standard_normal(3))
        p = Tensor(rng.standard_normal(x.shape))
        rm, rv = np.zeros(3), np.ones(3) * 1.5

        def loss():
            return ops.sum(batch_norm(x, g, b, rm.copy(), rv.copy(), train=train, update_stats=False) * p)

        reports = check_parameters(loss, {"x": x, "g": g, "b": b}, count=None)
        assert all(r.passed for r in reports.values()), reports


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def gru_reference(xs, W, U, b, h0):
    """Plain numpy loop, gate order (z, r, candidate)."""
    hidden = U.shape[1]
    h = h0.copy()
    outs = []
    for t in range(xs.shape[1]):
        x = xs[:, t]
        z = _sigmoid(x @ W[:hidden].T + h @ U[:hidden].T + b[:hidden])
        r = _sigmoid(x @ W[hidden:2 * hidden].T + h @ U[hidden:2 * hidden].T + b[hidden:2 * hidden])
        c = np.tanh(x @ W[2 * hidden:].T + (r * h) @ U[2 * hidden:].T + b[2 * hidden:])
        h = (1 - z) * h + z * c
        outs.append(h)
    return np.stack(outs, axis=1)


class TestGRU:
    def _weights(self, rng, n_in, hidden):
        return {"W": rng.standard_normal((3 * hidden, n_in)), "U": rng.standard_normal((3 * hidden, hidden)),
                "b": rng.standard_normal(3 * hidden)}

    @pytest.mark.parametrize("n_in,hidden", [(1, 1), (3, 4)])
    def test_sequence_matches_reference(self, n_in, hidden, rng):
        w = self._weights(rng, n_in, hidden)
        xs = rng.standard_normal((2, 7, n_in))
        got = gru_sequence(Tensor(xs), {k: Tensor(v) for k, v in w.items()}).data
        np.testing.assert_allclose(got, gru_reference(xs, w["W"], w["U"], w["b"], np.zeros((2, hidden))), atol=1e-12)

    def test_step_matches_sequence(self, rng):
        w = {k: Tensor(v) for k, v in self._weights(rng, 2, 3).items()}
        xs = rng.standard_normal((1, 4, 2))
        h = Tensor(np.zeros((1, 3)))
        for t in range(4):
            h = gru_step(Tensor(xs[:, t]), h, w)
        np.testing.assert_allclose(h.data, gru_sequence(Tensor(xs), w).data[:, -1], atol=1e-14)

    def test_is_causal(self, rng):
        w = {k: Tensor(v) for k, v in self._weights(rng, 1, 1).items()}
        xs = rng.standard_normal((1, 8, 1))
        base = gru_sequence(Tensor(xs), w).data
        ys = xs.copy()
        ys[:, 5:] = 50.0
        np.testing.assert_array_equal(gru_sequence(Tensor(ys), w).data[:, :5], base[:, :5])

    def test_gradients(self, rng):
        w = {k: Tensor(v * 0.5) for k, v in self._weights(rng, 2, 3).items()}
        xs = Tensor(rng.standard_normal((2, 5, 2)))
        p = Tensor(rng.standard_normal((2, 5, 3)))
        reports = check_parameters(lambda: ops.sum(gru_sequence(xs, w) * p), {"x": xs, **w}, count=None)
        assert all(r.passed for r in reports.values()), reports
