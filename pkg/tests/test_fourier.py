import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contconv.fourier import (
    DiscreteSignal2D,
    FourierSeries1D,
    FourierSeries2D,
    coeff_convolution_matrix,
    convolve,
    dft2,
    evaluate,
    grid_values,
    inner_product,
    is_hermitian,
)
from oracles import brute_dft2, circular_convolution_grid, random_hermitian, series_at, series_on_grid


def unit(K, k):
    c = np.zeros((2 * K[0] + 1, 2 * K[1] + 1), complex)
    c[k[0] + K[0], k[1] + K[1]] = 1
    return FourierSeries2D(c)


def test_dft_constant():
    X = dft2(DiscreteSignal2D(np.full((4, 4), 2.5)))
    expected = np.zeros((4, 4))
    expected[0, 0] = 16 * 2.5
    np.testing.assert_allclose(X, expected, atol=1e-12)


def test_dft_impulse():
    x = np.zeros((5, 3))
    x[0, 0] = 1
    np.testing.assert_allclose(dft2(x), np.ones((5, 3)), atol=1e-12)


def test_dft_matches_brute_force(rng):
    x = rng.normal(size=(8, 8))
    assert np.max(np.abs(dft2(DiscreteSignal2D(x)) - brute_dft2(x))) <= 1e-10


def test_dft_cached_once(rng):
    s = DiscreteSignal2D(rng.normal(size=(6, 5)))
    assert s.dft is s.dft
    with pytest.raises(ValueError):
        s.dft[0, 0] = 1


def test_dft_periodic_extension(rng):
    from contconv.fourier import dft_centered

    x = rng.normal(size=(6, 7))
    X = dft2(x)
    # bins -K..K picked by wrap-around must equal the explicit DFT at k and k + N
    c = dft_centered(X, (5, 5))
    n1, n2 = np.arange(6), np.arange(7)
    for k1 in (-5, -1, 0, 4):
        for k2 in (-5, 3):
            direct = np.sum(x * np.exp(-2j * np.pi * (np.outer(n1 * k1 / 6, np.ones(7)) + np.outer(np.ones(6), n2 * k2 / 7))))
            assert abs(c[k1 + 5, k2 + 5] - direct) < 1e-10
            assert X[k1 % 6, k2 % 7] == X[(k1 + 6) % 6, (k2 + 7) % 7]


def test_inner_product_orthonormal():
    K = (2, 2)
    assert inner_product(unit(K, (1, 0)), unit(K, (1, 0))) == pytest.approx(1)
    assert inner_product(unit(K, (1, 0)), unit(K, (2, 0))) == pytest.approx(0)


def test_inner_product_quadrature(rng):
    K = (3, 3)
    g = FourierSeries2D(rng.normal(size=(7, 7)) + 1j * rng.normal(size=(7, 7)))
    h = FourierSeries2D(rng.normal(size=(7, 7)) + 1j * rng.normal(size=(7, 7)))
    t = np.arange(256) / 256
    quad = np.mean(series_on_grid(g.coeffs, t, t) * np.conj(series_on_grid(h.coeffs, t, t)))
    ip = inner_product(g, h)
    assert abs(ip - quad) / abs(quad) <= 1e-8


def test_inner_product_pads_narrower(rng):
    g = FourierSeries2D(rng.normal(size=(3, 3)) + 0j)
    h = FourierSeries2D(rng.normal(size=(7, 5)) + 0j)
    assert inner_product(g, h) == pytest.approx(np.sum(g.coeffs * np.conj(h.coeffs[2:5, 1:4])))


def test_period_mismatch():
    g = FourierSeries2D(np.ones((3, 3)))
    h = FourierSeries2D(np.ones((3, 3)), periods=(2.0, 1.0))
    with pytest.raises(ValueError):
        inner_product(g, h)
    with pytest.raises(ValueError):
        convolve(g, h)


def test_convolve_identity(rng):
    g = FourierSeries2D(rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)))
    delta = FourierSeries2D(np.ones((9, 9)))
    np.testing.assert_allclose(convolve(g, delta).coeffs, g.coeffs)


def test_convolve_eigenfunction():
    K = (2, 2)
    out = convolve(unit(K, (1, 0)), unit(K, (1, 0)))
    assert out[(1, 0)] == 1
    assert np.count_nonzero(out.coeffs) == 1


def test_convolve_quadrature(rng):
    K = (4, 4)
    g = FourierSeries2D(random_hermitian(rng, K))
    h = FourierSeries2D(random_hermitian(rng, K))
    Q = 64
    t = np.arange(Q) / Q
    ref = circular_convolution_grid(series_on_grid(g.coeffs, t, t), series_on_grid(h.coeffs, t, t))
    out = convolve(g, h)
    for i1, i2 in rng.integers(0, Q, size=(16, 2)):
        got = evaluate(out, (t[i1], t[i2]))
        assert abs(got - ref[i1, i2]) <= 1e-6 * max(1.0, abs(ref[i1, i2]))


def test_toeplitz_constant():
    M = coeff_convolution_matrix(FourierSeries1D(np.array([3.0])), 2)
    np.testing.assert_array_equal(M, 3 * np.eye(5))


def test_toeplitz_banded():
    a, b, c = 1.0, 2.0, 3.0
    M = coeff_convolution_matrix(FourierSeries1D(np.array([a, b, c])), 1)
    expected = np.array([[a, 0, 0], [b, a, 0], [c, b, a], [0, c, b], [0, 0, c]])
    np.testing.assert_array_equal(M, expected)


def test_toeplitz_direct_sum(rng):
    L, K = 2, 3
    w = rng.normal(size=2 * L + 1) + 1j * rng.normal(size=2 * L + 1)
    f = rng.normal(size=2 * K + 1) + 1j * rng.normal(size=2 * K + 1)
    M = coeff_convolution_matrix(FourierSeries1D(w), K)
    direct = np.zeros(2 * K + 2 * L + 1, complex)
    for k in range(-K - L, K + L + 1):
        for l in range(-K, K + 1):
            if abs(k - l) <= L:
                direct[k + K + L] += w[k - l + L] * f[l + K]
    assert np.max(np.abs(M @ f - direct)) <= 1e-12


def test_evaluate_origin_and_constant(rng):
    g = FourierSeries2D(rng.normal(size=(5, 7)) + 1j * rng.normal(size=(5, 7)))
    assert evaluate(g, (0.0, 0.0)) == pytest.approx(g.coeffs.sum())
    c = np.zeros((3, 3), complex)
    c[1, 1] = 2.5
    for t in rng.random((5, 2)):
        assert evaluate(FourierSeries2D(c), t) == pytest.approx(2.5)


def test_evaluate_matches_inverse_dft(rng):
    K = 3
    g = FourierSeries2D(rng.normal(size=(7, 7)) + 1j * rng.normal(size=(7, 7)))
    # numpy ifft with explicit reordering of centered coefficients
    grid = np.fft.ifft2(np.fft.ifftshift(g.coeffs)) * 49
    n = np.arange(7)
    pts = np.array([(a / 7, b / 7) for a in n for b in n])
    vals = evaluate(g, pts).reshape(7, 7)
    assert np.max(np.abs(vals - grid)) <= 1e-10
    assert np.max(np.abs(grid_values(g.coeffs) - grid)) <= 1e-10
    assert abs(series_at(g.coeffs, 0.3, 0.71) - evaluate(g, (0.3, 0.71))) < 1e-10


def test_parseval(rng):
    g = FourierSeries2D(random_hermitian(rng, (4, 3)))
    t = np.arange(128) / 128
    quad = np.mean(np.abs(series_on_grid(g.coeffs, t, t)) ** 2)
    assert abs(inner_product(g, g).real - quad) / quad <= 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 4), st.integers(0, 4), st.integers(0, 2**31))
def test_hermitian_preserved(K1, K2, seed):
    rng = np.random.default_rng(seed)
    g = FourierSeries2D(random_hermitian(rng, (K1, K2)), hermitian=True)
    h = FourierSeries2D(random_hermitian(rng, (K2, K1)), hermitian=True)
    assert convolve(g, h).hermitian and is_hermitian(convolve(g, h).coeffs)
    s = g + h
    assert s.hermitian and is_hermitian(s.coeffs)
    assert abs(evaluate(g, rng.random(2)).imag) < 1e-10


def test_hermitian_flag_validated():
    with pytest.raises(ValueError):
        FourierSeries2D(np.array([[0, 0, 0], [0, 1, 1j], [0, 0, 0]]), hermitian=True)
