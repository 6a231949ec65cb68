"""Maximization of a confidence series over the unit period square.

A coarse grid search on the ``(2K1+1) x (2K2+1)`` lattice is followed by
Newton iterations using the analytic gradient and Hessian of the series.
Positions are in period units; trackers convert them to pixels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .fourier import FourierSeries2D, grid_values

IMAG_TOL = 1e-8


@dataclass(frozen=True)
class LocalizationResult:
    position: tuple
    score: float
    newton_iters_used: int = 0
    converged: bool = False


def _coeffs(s):
    return s.coeffs if isinstance(s, FourierSeries2D) else np.asarray(s)


def grid_scores(coeffs) -> np.ndarray:
    """Real series values on the coarse lattice; works on stacks of coefficient blocks."""
    vals = grid_values(coeffs)
    scale = max(1.0, float(np.max(np.abs(vals.real)))) if vals.size else 1.0
    resid = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    if resid > IMAG_TOL * scale:
        raise ValueError(f"series is not real-valued (imaginary residue {resid:.3g})")
    return vals.real


def grid_search(s):
    """Return ``((t1, t2), value)`` of the best lattice point, lowest index on ties."""
    c = _coeffs(s)
    vals = grid_scores(c)
    i1, i2 = np.unravel_index(int(np.argmax(vals)), vals.shape)
    return (i1 / vals.shape[0], i2 / vals.shape[1]), float(vals[i1, i2])


def grid_search_batch(coeffs):
    """Lattice argmax for a ``(P, M1, M2)`` stack; returns positions ``(P, 2)`` and values."""
    vals = grid_scores(coeffs)
    P, M1, M2 = vals.shape
    flat = np.argmax(vals.reshape(P, -1), axis=1)
    i1, i2 = np.divmod(flat, M2)
    pos = np.stack([i1 / M1, i2 / M2], axis=1)
    return pos, vals.reshape(P, -1)[np.arange(P), flat]


def newton_refine(s, t0, max_iters: int = 5) -> LocalizationResult:
    c = _coeffs(s)[None]
    t, score, iters, conv = kernels.newton_refine_batch(c, np.asarray(t0, float)[None], max_iters)
    return LocalizationResult((float(t[0, 0]), float(t[0, 1])), float(score[0]), int(iters[0]), bool(conv[0]))


def lattice_maxima(vals):
    """Indices of periodic 8-neighbourhood local maxima, best first."""
    nb = [np.roll(vals, (a, b), axis=(0, 1)) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)]
    peak = np.all([vals >= n for n in nb], axis=0)
    idx = np.argwhere(peak)
    order = np.argsort(-vals[peak], kind="stable")
    return idx[order]


def localize(s, newton_iters: int = 5, oversample: int = 1, starts: int = 1) -> LocalizationResult:
    """Grid search, then ``newton_iters`` Newton steps (none for ``0``).

    The defaults search the ``(2K1+1) x (2K2+1)`` lattice and refine its best
    point. ``oversample`` densifies the lattice; ``starts > 1`` refines that
    many lattice local maxima (``0`` for all of them) and keeps the best.
    """
    c = _coeffs(s)
    if oversample == 1 and starts == 1:
        t0, value = grid_search(c)
        if newton_iters <= 0:
            return LocalizationResult(t0, value, 0, False)
        return newton_refine(c, t0, newton_iters)
    M = (oversample * c.shape[0], oversample * c.shape[1])
    vals = grid_values(c, M)
    if np.max(np.abs(vals.imag)) > IMAG_TOL * max(1.0, float(np.max(np.abs(vals.real)))):
        raise ValueError("series is not real-valued")
    vals = vals.real
    idx = lattice_maxima(vals)
    if starts > 0:
        idx = idx[:starts]
    t0 = idx / np.array(M, float)
    if newton_iters <= 0:
        return LocalizationResult(tuple(t0[0]), float(vals[tuple(idx[0])]), 0, False)
    t, score, iters, conv = kernels.newton_refine_batch(np.repeat(c[None], len(t0), axis=0), t0, newton_iters)
    best = int(np.argmax(score))
    return LocalizationResult((float(t[best, 0]), float(t[best, 1])), float(score[best]), int(iters[best]), bool(conv[best]))


def localize_batch(coeffs, newton_iters: int = 5):
    """Batched :func:`localize`; returns ``(positions (P, 2), scores (P,))``."""
    coeffs = np.asarray(coeffs)
    t0, value = grid_search_batch(coeffs)
    if newton_iters <= 0:
        return t0, value
    t, score, _, _ = kernels.newton_refine_batch(coeffs, t0, newton_iters)
    return t, score
