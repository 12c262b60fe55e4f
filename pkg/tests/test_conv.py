"""Convolutions against brute-force loop oracles."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmnet.autodiff import ShapeError, Tensor, causal_padding, conv2d, conv2d_transpose, finite_difference_check, ops


def conv_loops(x, w, b, stride, padding):
    """Direct cross-correlation with explicit zero padding (past time, left/right freq)."""
    bsz, ci, t, f = x.shape
    co, _, kt, kf = w.shape
    pt, pl, pr = padding
    xp = np.zeros((bsz, ci, t + pt, f + pl + pr))
    xp[:, :, pt:, pl:pl + f] = x
    to = (t + pt - kt) // stride[0] + 1
    fo = (f + pl + pr - kf) // stride[1] + 1
    out = np.zeros((bsz, co, to, fo))
    for n in range(bsz):
        for o in range(co):
            for i in range(to):
                for j in range(fo):
                    patch = xp[n, :, i * stride[0]:i * stride[0] + kt, j * stride[1]:j * stride[1] + kf]
                    out[n, o, i, j] = np.sum(patch * w[o]) + (b[o] if b is not None else 0.0)
    return out


def deconv_scatter(x, w, b, stride, freq_crop, out_freq):
    """Scatter each input pixel times the kernel into the output grid, then crop."""
    bsz, ci, t, f = x.shape
    _, co, kt, kf = w.shape
    full = np.zeros((bsz, co, (t - 1) * stride[0] + kt, (f - 1) * stride[1] + kf))
    for n in range(bsz):
        for c in range(ci):
            for i in range(t):
                for j in range(f):
                    full[n, :, i * stride[0]:i * stride[0] + kt, j * stride[1]:j * stride[1] + kf] += x[n, c, i, j] * w[c]
    out = full[:, :, :t * stride[0], freq_crop:freq_crop + out_freq]
    return out + (b[None, :, None, None] if b is not None else 0.0)


@given(st.integers(1, 2), st.integers(1, 3), st.integers(1, 3), st.integers(2, 6), st.integers(5, 11),
       st.sampled_from([(1, 1), (1, 3), (3, 3), (2, 5)]), st.sampled_from([(1, 1), (1, 2), (2, 2)]),
       st.integers(0, 999))
def test_conv2d_matches_loops(b, ci, co, t, f, kernel, stride, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((b, ci, t, f))
    w = rng.standard_normal((co, ci) + kernel)
    bias = rng.standard_normal(co)
    pad = causal_padding(kernel)
    got = conv2d(Tensor(x), Tensor(w), Tensor(bias), stride, pad).data
    np.testing.assert_allclose(got, conv_loops(x, w, bias, stride, pad), atol=1e-12)


@given(st.integers(1, 2), st.integers(1, 3), st.integers(1, 3), st.integers(1, 5), st.integers(3, 9),
       st.sampled_from([(1, 1), (1, 3), (3, 5), (2, 3)]), st.sampled_from([(1, 1), (1, 2)]), st.integers(0, 999))
def test_conv2d_transpose_matches_scatter(b, ci, co, t, f, kernel, stride, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((b, ci, t, f))
    w = rng.standard_normal((ci, co) + kernel)
    bias = rng.standard_normal(co)
    crop = (kernel[1] - 1) // 2
    out_freq = (f - 1) * stride[1] + kernel[1] - 2 * crop
    got = conv2d_transpose(Tensor(x), Tensor(w), Tensor(bias), stride, crop, out_freq).data
    np.testing.assert_allclose(got, deconv_scatter(x, w, bias, stride, crop, out_freq), atol=1e-12)


def test_frequency_chain_shapes(rng):
    x = Tensor(rng.standard_normal((1, 2, 4, 257)))
    w = Tensor(rng.standard_normal((3, 2, 3, 5)))
    h1 = conv2d(x, w, None, (1, 2), causal_padding((3, 5)))
    h2 = conv2d(h1, Tensor(rng.standard_normal((3, 3, 3, 5))), None, (1, 2), causal_padding((3, 5)))
    assert (h1.shape[-1], h2.shape[-1]) == (129, 65)
    up1 = conv2d_transpose(h2, Tensor(rng.standard_normal((3, 3, 3, 5))), None, (1, 2), 2, 129)
    up2 = conv2d_transpose(up1, Tensor(rng.standard_normal((3, 3, 3, 5))), None, (1, 2), 2, 257)
    assert (up1.shape[-1], up2.shape[-1]) == (129, 257)
    assert up2.shape[2] == 4


def test_conv_adjoint_identity(rng):
    # <conv(x), y> = <x, conv^T(y)> where conv^T is conv2d's own backward
    x = rng.standard_normal((2, 3, 6, 9))
    w = rng.standard_normal((4, 3, 3, 5))
    y = rng.standard_normal((2, 4, 6, 5))
    xt = Tensor(x, requires_grad=True)
    out = conv2d(xt, Tensor(w), None, (1, 2), causal_padding((3, 5)))
    ops.sum(out * Tensor(y)).backward()
    np.testing.assert_allclose(np.sum(out.data * y), np.sum(x * xt.grad), rtol=1e-12)


@pytest.mark.parametrize("which", ["conv", "deconv"])
def test_outputs_are_causal(which, rng):
    t = 7
    x = rng.standard_normal((1, 2, t, 9))
    if which == "conv":
        w = rng.standard_normal((3, 2, 3, 5))
        fn = lambda v: conv2d(Tensor(v), Tensor(w), None, (1, 2), causal_padding((3, 5))).data  # noqa: E731
    else:
        w = rng.standard_normal((2, 3, 3, 5))
        fn = lambda v: conv2d_transpose(Tensor(v), Tensor(w), None, (1, 2), 2, 17).data  # noqa: E731
    base = fn(x)
    for cut in range(t - 1):
        y = x.copy()
        y[:, :, cut + 1:] += rng.standard_normal(y[:, :, cut + 1:].shape) * 10
        np.testing.assert_array_equal(fn(y)[:, :, :cut + 1], base[:, :, :cut + 1])


def test_gradients(rng):
    x = rng.standard_normal((2, 2, 5, 9))
    w = rng.standard_normal((3, 2, 3, 5))
    p = Tensor(rng.standard_normal((2, 3, 5, 5)))
    pad = causal_padding((3, 5))
    for target in ("x", "w"):
        def f(t):
            args = {"x": Tensor(x), "w": Tensor(w)}
            args[target] = t
            return ops.sum(conv2d(args["x"], args["w"], None, (1, 2), pad) * p)
        assert finite_difference_check(f, Tensor({"x": x, "w": w}[target])).passed

    wt = rng.standard_normal((2, 3, 3, 5))
    q = Tensor(rng.standard_normal((2, 3, 5, 17)))
    for target in ("x", "w"):
        def g(t):
            args = {"x": Tensor(x), "w": Tensor(wt)}
            args[target] = t
            return ops.sum(conv2d_transpose(args["x"], args["w"], None, (1, 2), 2, 17) * q)
        assert finite_difference_check(g, Tensor({"x": x, "w": wt}[target])).passed


def test_three_dim_input_is_unbatched(rng):
    x = rng.standard_normal((2, 4, 7))
    w = rng.standard_normal((3, 2, 3, 3))
    a = conv2d(Tensor(x), Tensor(w), None, (1, 1), causal_padding((3, 3))).data
    b = conv2d(Tensor(x[None]), Tensor(w), None, (1, 1), causal_padding((3, 3))).data[0]
    np.testing.assert_array_equal(a, b)


def test_shape_errors(rng):
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.ones((1, 2, 3, 5))), Tensor(np.ones((1, 3, 3, 3))))
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))))
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.ones((5, 5))), Tensor(np.ones((1, 1, 1, 1))))
    with pytest.raises(ShapeError):
        conv2d_transpose(Tensor(np.ones((1, 2, 3, 5))), Tensor(np.ones((3, 1, 3, 3))))
