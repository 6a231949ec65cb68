"""Desired confidence functions: periodized Gaussians with sub-pixel centers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fourier import FourierSeries2D


class AliasingError(ValueError):
    """Label width too small for the truncated series to represent it."""


@dataclass(frozen=True)
class LabelSpec:
    center: tuple  # (u1, u2) in period units
    sigma: tuple  # per-dimension standard deviation in period units

    def __post_init__(self):
        sigma = tuple(float(s) for s in np.broadcast_to(self.sigma, (2,)))
        if min(sigma) <= 0:
            raise ValueError("sigma must be positive")
        center = tuple(float(u) % 1.0 for u in self.center)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "center", center)


def periodic_repetition_coeffs(ft, K: int, period: float = 1.0) -> np.ndarray:
    """Fourier coefficients of the ``period``-periodic repetition of a function.

    ``ft`` is the continuous Fourier transform of the unrepeated function.
    """
    k = np.arange(-K, K + 1)
    return np.asarray(ft(k / period), dtype=complex) / period


def gaussian_coeffs_1d(u: float, sigma: float, K: int) -> np.ndarray:
    k = np.arange(-K, K + 1)
    return np.sqrt(2 * np.pi * sigma**2) * np.exp(-2 * sigma**2 * (np.pi * k) ** 2 - 2j * np.pi * u * k)


def check_sigma(sigma, bandwidths):
    for s, K in zip(sigma, bandwidths):
        if s < 0.5 / (2 * K + 1):
            raise AliasingError(f"sigma={s:.4g} below aliasing limit {0.5 / (2 * K + 1):.4g} for K={K}")


def label_coeffs(spec: LabelSpec, bandwidths) -> FourierSeries2D:
    """Separable 2-D Gaussian label truncated to ``bandwidths``."""
    check_sigma(spec.sigma, bandwidths)
    y1 = gaussian_coeffs_1d(spec.center[0], spec.sigma[0], bandwidths[0])
    y2 = gaussian_coeffs_1d(spec.center[1], spec.sigma[1], bandwidths[1])
    return FourierSeries2D(np.outer(y1, y2), hermitian=True)


def label_coeffs_batch(centers, sigma, bandwidths) -> np.ndarray:
    """Stacked label coefficients for an (n, 2) array of centers, shape (n, 2K1+1, 2K2+1)."""
    check_sigma(sigma, bandwidths)
    c = np.asarray(centers, dtype=float)
    k1 = np.arange(-bandwidths[0], bandwidths[0] + 1)
    k2 = np.arange(-bandwidths[1], bandwidths[1] + 1)
    a1 = np.sqrt(2 * np.pi) * sigma[0] * np.exp(-2 * sigma[0] ** 2 * (np.pi * k1) ** 2)
    a2 = np.sqrt(2 * np.pi) * sigma[1] * np.exp(-2 * sigma[1] ** 2 * (np.pi * k2) ** 2)
    y1 = a1 * np.exp(-2j * np.pi * np.multiply.outer(c[:, 0], k1))
    y2 = a2 * np.exp(-2j * np.pi * np.multiply.outer(c[:, 1], k2))
    return y1[:, :, None] * y2[:, None, :]


def point_sigma(resolution):
    """Default label width for point tracking, about 1.5 samples."""
    return tuple(1.5 / n for n in np.broadcast_to(resolution, (2,)))


def object_sigma(target_size, region_size):
    """Default label width for object tracking, a sixteenth of the target extent."""
    return tuple(t / r / 16.0 for t, r in zip(np.broadcast_to(target_size, (2,)), np.broadcast_to(region_size, (2,))))
