import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alcn import filters, kernels
from alcn.filters import (convolve, convolve_separable, count_convolutions, gaussian_kernel,
                          gaussian_taps_dsigma, hadamard, kernel_size)
from conftest import direct_convolve, gaussian_oracle


@pytest.mark.parametrize("sigma,size", [(1.0, 7), (0.5, 5), (1.5, 11), (2.5, 17), (5.0, 31), (2.0, 13)])
def test_kernel_size(sigma, size):
    assert kernel_size(sigma) == size
    assert gaussian_kernel(sigma).size == size


def test_exact_paper_size_keeps_even():
    assert kernel_size(0.5, exact_paper_size=True) == 4
    k = gaussian_kernel(0.5, exact_paper_size=True)
    assert k.taps.shape == (4, 4)
    assert k.taps.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 1.7, 3.0, 5.0])
def test_kernel_normalized_symmetric_peaked(sigma):
    t = gaussian_kernel(sigma).taps
    assert abs(t.sum() - 1.0) <= 1e-12
    np.testing.assert_array_equal(t, t[::-1, :])
    np.testing.assert_array_equal(t, t[:, ::-1])
    c = t.shape[0] // 2
    assert t[c, c] == t.max()
    np.testing.assert_allclose(t, gaussian_oracle(sigma, t.shape[0]), atol=1e-15)


@pytest.mark.parametrize("sigma", [0.0, -1.0])
def test_kernel_rejects_nonpositive_sigma(sigma):
    with pytest.raises(ValueError):
        gaussian_kernel(sigma)


def test_impulse_reproduces_kernel():
    img = np.zeros((21, 21))
    img[10, 10] = 1.0
    k = gaussian_kernel(1.5)
    out = convolve(img, k)
    r = k.size // 2
    np.testing.assert_allclose(out[10 - r:10 + r + 1, 10 - r:10 + r + 1], k.taps[::-1, ::-1], atol=1e-15)


def test_asymmetric_kernel_orientation():
    # correlation: out[r, c] = sum k[i, j] * img[r + i - 1, c + j - 1]
    img = np.zeros((7, 7))
    img[3, 3] = 1.0
    k = np.arange(9.0).reshape(3, 3)
    out = convolve(img, k)
    np.testing.assert_array_equal(out[2:5, 2:5], k[::-1, ::-1])


def test_constant_preserved():
    img = np.full((12, 9), 0.37)
    np.testing.assert_allclose(convolve(img, gaussian_kernel(2.0)), 0.37, atol=1e-14)
    np.testing.assert_allclose(convolve_separable(img, 3.0), 0.37, atol=1e-14)


def test_direct_matches_bruteforce(rng):
    img = rng.random((16, 16))
    k = gaussian_kernel(1.5)
    np.testing.assert_allclose(convolve(img, k), direct_convolve(img, k.taps), atol=1e-12, rtol=0)


def test_separable_matches_direct_32(rng):
    img = rng.random((32, 32))
    np.testing.assert_allclose(convolve_separable(img, 1.0), convolve(img, gaussian_kernel(1.0)),
                               atol=1e-10, rtol=0)


@pytest.mark.parametrize("sigma", [0.5 * i for i in range(1, 11)])
def test_separable_equals_direct_all_sigmas(sigma, rng):
    img = rng.random((32, 32))
    np.testing.assert_allclose(convolve_separable(img, sigma), convolve(img, gaussian_kernel(sigma)),
                               atol=1e-10, rtol=0)


def test_separable_impulse_is_outer_product():
    img = np.zeros((25, 25))
    img[12, 12] = 1.0
    out = convolve_separable(img, 2.0)
    g = filters.gaussian_taps(2.0)
    r = len(g) // 2
    np.testing.assert_allclose(out[12 - r:12 + r + 1, 12 - r:12 + r + 1], np.outer(g, g), atol=1e-16)


def test_zero_border(rng):
    img = np.ones((9, 9))
    out = convolve(img, gaussian_kernel(1.0), border="zero")
    assert out[4, 4] == pytest.approx(1.0, abs=1e-3)
    assert out[0, 0] < 0.6


def test_stack_input(rng):
    stack = rng.random((3, 10, 11))
    out = convolve_separable(stack, 1.5)
    for i in range(3):
        np.testing.assert_allclose(out[i], convolve_separable(stack[i], 1.5), atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(-3, 3), beta=st.floats(-3, 3), seed=st.integers(0, 2**16))
def test_linearity(alpha, beta, seed):
    r = np.random.default_rng(seed)
    a, b = r.random((12, 12)), r.random((12, 12))
    k = gaussian_kernel(1.3)
    lhs = convolve(alpha * a + beta * b, k)
    rhs = alpha * convolve(a, k) + beta * convolve(b, k)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12, rtol=0)


def test_dsigma_matches_finite_difference():
    size = 13
    for sigma in (0.8, 1.5, 2.7):
        _, dg = gaussian_taps_dsigma(sigma, size)
        h = 1e-6
        fd = (gaussian_taps_dsigma(sigma + h, size)[0] - gaussian_taps_dsigma(sigma - h, size)[0]) / (2 * h)
        np.testing.assert_allclose(dg, fd, rtol=1e-6, atol=1e-10)


def test_hadamard(rng):
    a, b = rng.random((5, 6)), rng.random((5, 6))
    np.testing.assert_array_equal(hadamard(a, np.ones_like(a)), a)
    np.testing.assert_array_equal(hadamard(a, np.zeros_like(a)), 0.0)
    np.testing.assert_array_equal(hadamard(a, b), hadamard(b, a))
    with pytest.raises(ValueError):
        hadamard(a, b[:, :5])


def test_convolution_counter(rng):
    img = rng.random((8, 8))
    with count_convolutions() as c:
        convolve_separable(img, 1.0)
        convolve_separable(img, 2.0)
    assert c.count == 2
    convolve_separable(img, 1.0)
    assert c.count == 2


@pytest.mark.skipif("cython" not in kernels.available_backends(), reason="extension not built")
@pytest.mark.parametrize("border", ["replicate", "zero"])
def test_backends_agree(border, rng):
    x = rng.random((3, 20, 17))
    taps = rng.random(7)
    k2 = rng.random((5, 4))
    prev = kernels.use_backend("python")
    try:
        ref_a = kernels.correlate_axis(x, taps, 3, 1, border), kernels.correlate_axis(x, taps, 2, 2, border)
        ref_b = kernels.correlate2d(x, k2, 2, 2, border)
        kernels.use_backend("cython")
        np.testing.assert_allclose(kernels.correlate_axis(x, taps, 3, 1, border), ref_a[0], atol=1e-13)
        np.testing.assert_allclose(kernels.correlate_axis(x, taps, 2, 2, border), ref_a[1], atol=1e-13)
        np.testing.assert_allclose(kernels.correlate2d(x, k2, 2, 2, border), ref_b, atol=1e-13)
    finally:
        kernels.use_backend(prev)


@pytest.mark.skipif("cython" not in kernels.available_backends(), reason="extension not built")
def test_backends_agree_im2col(rng):
    x = rng.random((2, 9, 8, 3))
    outs = {}
    for name in ("python", "cython"):
        prev = kernels.use_backend(name)
        try:
            cols = kernels.im2col(x, 3, np.empty((2, 7, 6, 3, 3, 3)))
            dx = kernels.col2im(cols, 3, np.zeros_like(x))
            outs[name] = (cols.copy(), dx)
        finally:
            kernels.use_backend(prev)
    np.testing.assert_array_equal(outs["python"][0], outs["cython"][0])
    np.testing.assert_allclose(outs["python"][1], outs["cython"][1], atol=1e-13)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")
