"""Spatial penalty ``w`` as a band-limited Fourier series.

Two shapes are supported: a constant ``w = beta`` and a separable additive
raised cosine ``w(t1, t2) = w1(t1) + w2(t2)`` with
``wi(t) = mu - eta * cos(2 pi (t - c))``, lowest at the target center.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fourier import FourierSeries1D


@dataclass(frozen=True)
class PenaltySpec:
    kind: str = "constant"
    beta: float = 1e-4
    mu: tuple = (1.0, 1.0)
    eta: tuple = (0.0, 0.0)
    center: tuple = (0.5, 0.5)

    def __post_init__(self):
        if self.kind == "constant":
            if not self.beta > 0:
                raise ValueError("constant penalty needs beta > 0")
        elif self.kind == "raised_cosine":
            mu = tuple(float(v) for v in np.broadcast_to(self.mu, (2,)))
            eta = tuple(float(v) for v in np.broadcast_to(self.eta, (2,)))
            center = tuple(float(v) for v in np.broadcast_to(self.center, (2,)))
            if any(e < 0 for e in eta) or any(m <= e for m, e in zip(mu, eta)):
                raise ValueError(f"raised cosine needs mu > eta >= 0, got mu={mu}, eta={eta}")
            object.__setattr__(self, "mu", mu)
            object.__setattr__(self, "eta", eta)
            object.__setattr__(self, "center", center)
        else:
            raise ValueError(f"unknown penalty kind {self.kind!r}")

    @classmethod
    def constant(cls, beta):
        return cls("constant", beta=beta)

    @classmethod
    def raised_cosine(cls, mu, eta, center=(0.5, 0.5)):
        return cls("raised_cosine", mu=mu, eta=eta, center=center)

    @classmethod
    def from_contrast(cls, w_min=1e-3, ratio=0.01, center=(0.5, 0.5)):
        """Raised cosine with ``w(center) = w_min`` and ``w(center) / w(far corner) = ratio``."""
        lo, hi = w_min / 2, w_min / ratio / 2
        return cls.raised_cosine(((lo + hi) / 2,) * 2, ((hi - lo) / 2,) * 2, center)

    @property
    def bandwidth(self) -> int:
        return 0 if self.kind == "constant" else 1


def penalty_coeffs(spec: PenaltySpec):
    """Per-dimension coefficient series ``(w1, w2)``."""
    if spec.kind == "constant":
        w = FourierSeries1D(np.array([spec.beta]), hermitian=True)
        return (w, w)
    out = []
    for mu, eta, c in zip(spec.mu, spec.eta, spec.center):
        side = -0.5 * eta * np.exp(-2j * np.pi * np.array([-1, 1]) * c)
        out.append(FourierSeries1D(np.array([side[0], mu, side[1]]), hermitian=True))
    return tuple(out)


def penalty_matrix(spec: PenaltySpec) -> np.ndarray:
    """Centered 2-D coefficient matrix of ``w(t1, t2)``.

    The constant case is the single value ``beta``; the raised cosine adds the
    two per-dimension series along the axes.
    """
    if spec.kind == "constant":
        return np.array([[spec.beta]], dtype=complex)
    w1, w2 = penalty_coeffs(spec)
    W = np.zeros((3, 3), complex)
    W[:, 1] += w1.coeffs
    W[1, :] += w2.coeffs
    return W


def evaluate_penalty(spec: PenaltySpec, t1, t2):
    W = penalty_matrix(spec)
    L = (W.shape[0] - 1) // 2
    k = np.arange(-L, L + 1)
    e1 = np.exp(2j * np.pi * np.multiply.outer(np.asarray(t1, float), k))
    e2 = np.exp(2j * np.pi * np.multiply.outer(np.asarray(t2, float), k))
    return np.einsum("...i,ij,...j->...", e1, W, e2).real
