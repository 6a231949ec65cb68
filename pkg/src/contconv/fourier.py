"""Truncated Fourier series of periodic functions and their algebra.

Coefficient arrays are stored centered: index ``k`` lives at position
``k + K`` so an array of length ``2K+1`` covers ``-K..K``. The period is
fixed to 1 in every dimension throughout the package.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft

HERMITIAN_ATOL = 1e-12


def _check_period(a, b):
    if not np.allclose(a, b, rtol=0, atol=0):
        raise ValueError(f"period mismatch: {a} vs {b}")


def is_hermitian(coeffs, atol=HERMITIAN_ATOL):
    """True when ``coeffs[-k] == conj(coeffs[k])`` for a centered array."""
    c = np.asarray(coeffs)
    flipped = c[tuple(slice(None, None, -1) for _ in range(c.ndim))]
    return bool(np.allclose(flipped, np.conj(c), rtol=0, atol=atol))


def pad_centered(coeffs, shape):
    """Zero-extend a centered coefficient array to a larger centered shape."""
    c = np.asarray(coeffs)
    if c.shape == tuple(shape):
        return c
    out = np.zeros(shape, dtype=np.result_type(c.dtype, np.complex128))
    sl = []
    for have, want in zip(c.shape, shape):
        if have > want or (want - have) % 2:
            raise ValueError(f"cannot pad shape {c.shape} to {shape}")
        off = (want - have) // 2
        sl.append(slice(off, off + have))
    out[tuple(sl)] = c
    return out


def crop_centered(coeffs, shape):
    """Keep the central ``shape`` block of a centered coefficient array."""
    c = np.asarray(coeffs)
    sl = []
    for have, want in zip(c.shape, shape):
        if want > have or (have - want) % 2:
            raise ValueError(f"cannot crop shape {c.shape} to {shape}")
        off = (have - want) // 2
        sl.append(slice(off, off + want))
    return c[tuple(sl)]


@dataclass(frozen=True)
class FourierSeries1D:
    coeffs: np.ndarray
    period: float = 1.0
    hermitian: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 1 or c.size % 2 != 1:
            raise ValueError("1-D series needs an odd-length coefficient vector")
        if self.period <= 0:
            raise ValueError("period must be positive")
        object.__setattr__(self, "coeffs", c)
        if self.hermitian and not is_hermitian(c):
            raise ValueError("coefficients flagged hermitian are not")

    @property
    def bandwidth(self) -> int:
        return (self.coeffs.size - 1) // 2

    def __getitem__(self, k):
        K = self.bandwidth
        return self.coeffs[k + K] if -K <= k <= K else 0j

    def evaluate(self, t):
        k = np.arange(-self.bandwidth, self.bandwidth + 1)
        t = np.asarray(t, dtype=float)
        return np.exp(2j * np.pi * np.multiply.outer(t, k) / self.period) @ self.coeffs


@dataclass(frozen=True)
class FourierSeries2D:
    """Coefficients ``g[k1, k2]`` for ``|k1| <= K1``, ``|k2| <= K2``."""

    coeffs: np.ndarray
    periods: tuple = (1.0, 1.0)
    hermitian: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] % 2 != 1 or c.shape[1] % 2 != 1:
            raise ValueError("2-D series needs an odd-by-odd coefficient matrix")
        if min(self.periods) <= 0:
            raise ValueError("periods must be positive")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "periods", tuple(float(p) for p in self.periods))
        if self.hermitian and not is_hermitian(c):
            raise ValueError("coefficients flagged hermitian are not")

    @property
    def bandwidths(self):
        return ((self.coeffs.shape[0] - 1) // 2, (self.coeffs.shape[1] - 1) // 2)

    def __getitem__(self, k):
        K1, K2 = self.bandwidths
        k1, k2 = k
        if abs(k1) > K1 or abs(k2) > K2:
            return 0j
        return self.coeffs[k1 + K1, k2 + K2]

    def padded(self, bandwidths) -> "FourierSeries2D":
        shape = (2 * bandwidths[0] + 1, 2 * bandwidths[1] + 1)
        return FourierSeries2D(pad_centered(self.coeffs, shape), self.periods, self.hermitian)

    def truncated(self, bandwidths) -> "FourierSeries2D":
        shape = (2 * bandwidths[0] + 1, 2 * bandwidths[1] + 1)
        return FourierSeries2D(crop_centered(self.coeffs, shape), self.periods, self.hermitian)

    def __add__(self, other):
        _check_period(self.periods, other.periods)
        K = tuple(max(a, b) for a, b in zip(self.bandwidths, other.bandwidths))
        return FourierSeries2D(
            self.padded(K).coeffs + other.padded(K).coeffs,
            self.periods,
            self.hermitian and other.hermitian,
        )

    def __mul__(self, scalar):
        return FourierSeries2D(self.coeffs * scalar, self.periods, self.hermitian and np.isrealobj(scalar))

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, bandwidths):
        return cls(np.zeros((2 * bandwidths[0] + 1, 2 * bandwidths[1] + 1), complex), hermitian=True)


@dataclass(frozen=True)
class DiscreteSignal2D:
    """Real samples ``x[n1, n2]`` with a lazily cached unnormalized DFT."""

    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2 or min(s.shape) < 1:
            raise ValueError("signal must be a nonempty 2-D array")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def shape(self):
        return self.samples.shape

    @cached_property
    def dft(self) -> np.ndarray:
        # deterministic value, so a duplicate computation under a race publishes the same array
        X = dft2(self.samples)
        X.setflags(write=False)
        return X


def dft2(signal) -> np.ndarray:
    """Unnormalized forward DFT, ``X[k] = sum_n x[n] exp(-2i pi n k / N)`` per axis."""
    x = signal.samples if isinstance(signal, DiscreteSignal2D) else np.asarray(signal)
    return scipy.fft.fft2(x)


def dft_centered(X, bandwidths) -> np.ndarray:
    """Pick DFT bins ``-K..K`` (using N-periodicity) from a full DFT matrix.

    Works on stacks: only the last two axes are indexed.
    """
    N1, N2 = X.shape[-2:]
    K1, K2 = bandwidths
    i1 = np.arange(-K1, K1 + 1) % N1
    i2 = np.arange(-K2, K2 + 1) % N2
    return X[..., i1[:, None], i2[None, :]]


def inner_product(g: FourierSeries2D, h: FourierSeries2D) -> complex:
    """``<g, h> = sum_k g[k] conj(h[k])`` (Parseval); narrower operand is zero-padded."""
    _check_period(g.periods, h.periods)
    K = tuple(max(a, b) for a, b in zip(g.bandwidths, h.bandwidths))
    return complex(np.vdot(h.padded(K).coeffs, g.padded(K).coeffs))


def norm_sq(g: FourierSeries2D) -> float:
    return float(np.sum(np.abs(g.coeffs) ** 2))


def convolve(g: FourierSeries2D, h: FourierSeries2D) -> FourierSeries2D:
    """Circular convolution: coefficient-wise product on the shared index range."""
    _check_period(g.periods, h.periods)
    K = tuple(min(a, b) for a, b in zip(g.bandwidths, h.bandwidths))
    return FourierSeries2D(
        g.truncated(K).coeffs * h.truncated(K).coeffs,
        g.periods,
        g.hermitian and h.hermitian,
    )


def coeff_convolution_matrix(w: FourierSeries1D, K: int) -> np.ndarray:
    """Toeplitz matrix ``M`` of shape ``(2K+2L+1, 2K+1)`` with ``M @ f = w * f``."""
    L = w.bandwidth
    r = np.arange(2 * K + 2 * L + 1)[:, None] - K - L
    c = np.arange(2 * K + 1)[None, :] - K
    lag = r - c
    M = np.zeros(lag.shape, dtype=complex)
    inside = np.abs(lag) <= L
    M[inside] = w.coeffs[lag[inside] + L]
    return M


def coeff_convolve2d(w, f) -> np.ndarray:
    """Full 2-D discrete convolution of centered coefficient arrays.

    Output shape is ``(2K1+2L1+1, 2K2+2L2+1)``; cheap when ``w`` is small.
    """
    w = np.asarray(w)
    f = np.asarray(f)
    out = np.zeros((f.shape[0] + w.shape[0] - 1, f.shape[1] + w.shape[1] - 1), complex)
    for i, j in zip(*np.nonzero(w)):
        out[i:i + f.shape[0], j:j + f.shape[1]] += w[i, j] * f
    return out


def coeff_correlate2d(w, g, shape) -> np.ndarray:
    """Adjoint of :func:`coeff_convolve2d` for an ``f`` of the given shape."""
    w = np.asarray(w)
    out = np.zeros(shape, complex)
    for i, j in zip(*np.nonzero(w)):
        out += np.conj(w[i, j]) * g[i:i + shape[0], j:j + shape[1]]
    return out


def evaluate(g: FourierSeries2D, t) -> complex | np.ndarray:
    """Evaluate ``sum_k g[k] e_k(t)`` at one point ``t = (t1, t2)`` or at an (n, 2) array."""
    K1, K2 = g.bandwidths
    T1, T2 = g.periods
    pts = np.atleast_2d(np.asarray(t, dtype=float))
    e1 = np.exp(2j * np.pi * np.multiply.outer(pts[:, 0], np.arange(-K1, K1 + 1)) / T1)
    e2 = np.exp(2j * np.pi * np.multiply.outer(pts[:, 1], np.arange(-K2, K2 + 1)) / T2)
    vals = np.einsum("pi,ij,pj->p", e1, g.coeffs, e2)
    return complex(vals[0]) if np.ndim(t) == 1 else vals


def grid_values(coeffs, shape=None) -> np.ndarray:
    """Series values on the uniform grid ``t = n / M`` via a scaled inverse DFT.

    ``shape`` defaults to ``(2K1+1, 2K2+1)``; a larger grid zero-pads the spectrum.
    """
    c = np.asarray(coeffs)
    K1, K2 = (c.shape[-2] - 1) // 2, (c.shape[-1] - 1) // 2
    M1, M2 = shape if shape is not None else c.shape[-2:]
    if M1 < 2 * K1 + 1 or M2 < 2 * K2 + 1:
        raise ValueError("grid too coarse for the series bandwidth")
    spec = np.zeros(c.shape[:-2] + (M1, M2), complex)
    i1 = np.arange(-K1, K1 + 1) % M1
    i2 = np.arange(-K2, K2 + 1) % M2
    spec[..., i1[:, None], i2[None, :]] = c
    return scipy.fft.ifft2(spec, norm="forward")
