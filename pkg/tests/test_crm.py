"""Complex ratio masks."""
import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from cmnet.signal import ComplexSpectrogram, CRMask, crm_apply, crm_compute
from cmnet.signal.crm import MAG_CLIP


def _spec(rng, t=6, scale=1.0):
    return ComplexSpectrogram(rng.standard_normal((t, 257)) * scale, rng.standard_normal((t, 257)) * scale)


def test_identity_and_unit_cases(rng):
    Y = _spec(rng)
    M = crm_compute(Y, Y)
    np.testing.assert_allclose(M.real, 1.0, atol=1e-12)
    np.testing.assert_allclose(M.imag, 0.0, atol=1e-12)
    one = ComplexSpectrogram(np.ones((1, 257)), np.zeros((1, 257)))
    j = ComplexSpectrogram(np.zeros((1, 257)), np.ones((1, 257)))
    M = crm_compute(one, j)
    np.testing.assert_allclose(M.complex, 1j)
    zero = ComplexSpectrogram(np.zeros((1, 257)), np.zeros((1, 257)))
    assert not np.any(crm_compute(one, zero).complex)


def test_apply_identity_and_zero(rng):
    Y = _spec(rng)
    ones = CRMask(np.ones(Y.shape), np.zeros(Y.shape))
    np.testing.assert_allclose(crm_apply(Y, ones).complex, Y.complex, atol=1e-12)
    assert np.allclose(crm_apply(Y, CRMask(np.zeros(Y.shape), np.zeros(Y.shape))).complex, 0.0)


@given(st.integers(0, 2**16))
def test_polar_application_equals_complex_product(seed):
    rng = np.random.default_rng(seed)
    Y = _spec(rng)
    M = CRMask(rng.standard_normal(Y.shape) * 3, rng.standard_normal(Y.shape) * 3)
    np.testing.assert_allclose(crm_apply(Y, M).complex, Y.complex * M.complex, atol=1e-9, rtol=0)


def test_clip_bounds_magnitude(rng):
    Y = _spec(rng, scale=1e-3)
    S = _spec(rng, scale=10.0)
    M = crm_compute(Y, S)
    assert np.all(M.mag <= MAG_CLIP * (1 + 1e-12))
    assert np.any(np.isclose(M.mag, MAG_CLIP))


def test_polar_views(rng):
    M = CRMask(rng.standard_normal((4, 5)), rng.standard_normal((4, 5)))
    assert np.all(M.mag >= 0)
    assert np.all((M.phase > -np.pi) & (M.phase <= np.pi))
    back = CRMask.from_polar(M.mag, M.phase)
    np.testing.assert_allclose(back.real, M.real, atol=1e-12)
    np.testing.assert_allclose(back.imag, M.imag, atol=1e-12)
    edge = CRMask(np.array([-1.0]), np.array([-0.0]))
    assert edge.phase[0] == np.pi
