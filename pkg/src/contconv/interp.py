"""Implicit interpolation of discrete feature channels into periodic functions.

A channel with ``N`` samples is lifted to ``J{x}(t) = sum_n x[n] b_N(t - n/N)``
where ``b_N`` is the periodized kernel scaled to the sample spacing and shifted
by half a sample. In the Fourier domain this is a per-coefficient product of
the DFT with the kernel coefficients returned by :func:`interp_coeffs`.
"""
from __future__ import annotations

import numpy as np

from .fourier import DiscreteSignal2D, FourierSeries2D, dft_centered


class CubicBSpline:
    """Centered cubic B-spline, support ``[-2, 2]``, continuous transform ``sinc^4``."""

    name = "cubic_bspline"

    @staticmethod
    def ft(xi):
        return np.sinc(xi) ** 4

    @staticmethod
    def __call__(t):
        a = np.abs(np.asarray(t, dtype=float))
        return np.where(
            a < 1,
            2.0 / 3.0 - a**2 + 0.5 * a**3,
            np.where(a < 2, (2.0 - a) ** 3 / 6.0, 0.0),
        )


DEFAULT_KERNEL = CubicBSpline()


def kernel_ft(xi, kernel=DEFAULT_KERNEL):
    """Continuous Fourier transform of the interpolation kernel."""
    return kernel.ft(xi)


def interp_coeffs(N: int, K: int, kernel=DEFAULT_KERNEL) -> np.ndarray:
    """Fourier coefficients ``b_N[k]`` for ``k = -K..K`` (period 1).

    ``b_N[k] = exp(-i pi k / N) * b(k / N) / N``
    """
    if N < 1 or K < 0:
        raise ValueError("need N >= 1 and K >= 0")
    k = np.arange(-K, K + 1)
    return np.exp(-1j * np.pi * k / N) * kernel.ft(k / N) / N


def flat_coeffs(N: int, K: int) -> np.ndarray:
    """Constant ``1/N`` coefficients: no interpolation model, as in plain MOSSE."""
    return np.full(2 * K + 1, 1.0 / N, dtype=complex)


def separable_coeffs(shape, bandwidths, kernel=DEFAULT_KERNEL) -> np.ndarray:
    """Outer product ``b_N1[k1] * b_N2[k2]`` as a centered matrix."""
    b1 = interp_coeffs(shape[0], bandwidths[0], kernel)
    b2 = interp_coeffs(shape[1], bandwidths[1], kernel)
    return np.outer(b1, b2)


def interpolate(channel, bandwidths, kernel=DEFAULT_KERNEL) -> FourierSeries2D:
    """Fourier series of the interpolated channel truncated to ``|k| <= K``."""
    if not isinstance(channel, DiscreteSignal2D):
        channel = DiscreteSignal2D(channel)
    X = dft_centered(channel.dft, bandwidths)
    return FourierSeries2D(X * separable_coeffs(channel.shape, bandwidths, kernel), hermitian=True)
