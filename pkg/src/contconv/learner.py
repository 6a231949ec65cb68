"""Training of continuous convolution filters in the Fourier domain.

A filter bank holds one centered coefficient block per feature channel, with
bandwidth ``K_d = floor(N_d / 2)`` per dimension. Channels of different
resolution are combined by zero-padding their products to the common
bandwidth ``K = max_d K_d``.

The normal equations ``(A^H G A + W^H W) f = A^H G y`` are never assembled
densely; :class:`NormalOperator` applies them sample by sample and channel
by channel so the cost stays linear in the number of channels.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .fourier import (
    DiscreteSignal2D,
    FourierSeries2D,
    coeff_convolve2d,
    coeff_correlate2d,
    dft_centered,
)
from .interp import DEFAULT_KERNEL, separable_coeffs
from .labels import LabelSpec, label_coeffs
from .regularizer import PenaltySpec, penalty_matrix

log = logging.getLogger(__name__)


def channel_bandwidths(shape):
    return (shape[0] // 2, shape[1] // 2)


def _block(K):
    return (2 * K[0] + 1, 2 * K[1] + 1)


def _inner_slice(K, Kd):
    return (slice(K[0] - Kd[0], K[0] + Kd[0] + 1), slice(K[1] - Kd[1], K[1] + Kd[1] + 1))


@dataclass(frozen=True)
class FeatureMap:
    channels: tuple

    def __post_init__(self):
        chans = tuple(c if isinstance(c, DiscreteSignal2D) else DiscreteSignal2D(c) for c in self.channels)
        if not chans:
            raise ValueError("a feature map needs at least one channel")
        object.__setattr__(self, "channels", chans)

    @property
    def resolutions(self):
        return [c.shape for c in self.channels]

    @property
    def bandwidths(self):
        return [channel_bandwidths(c.shape) for c in self.channels]

    @property
    def output_bandwidth(self):
        return tuple(max(K[i] for K in self.bandwidths) for i in range(2))

    def transformed(self, kernel=DEFAULT_KERNEL):
        """Per-channel ``X^d[k] b_d[k]`` on ``|k| <= K_d``."""
        out = []
        for c, K in zip(self.channels, self.bandwidths):
            out.append(dft_centered(c.dft, K) * separable_coeffs(c.shape, K, kernel))
        return out


@dataclass
class FilterBank:
    coeffs: list
    info: dict | None = field(default=None, compare=False)

    @property
    def bandwidths(self):
        return [((c.shape[0] - 1) // 2, (c.shape[1] - 1) // 2) for c in self.coeffs]

    @property
    def output_bandwidth(self):
        return tuple(max(K[i] for K in self.bandwidths) for i in range(2))

    @classmethod
    def zeros(cls, bandwidths):
        return cls([np.zeros(_block(K), complex) for K in bandwidths])

    @classmethod
    def for_features(cls, features: FeatureMap):
        return cls.zeros(features.bandwidths)

    def to_vector(self):
        return np.concatenate([c.ravel() for c in self.coeffs])

    def from_vector(self, v):
        out, pos = [], 0
        for c in self.coeffs:
            out.append(np.asarray(v[pos:pos + c.size]).reshape(c.shape).copy())
            pos += c.size
        return FilterBank(out)

    def channel_series(self, d) -> FourierSeries2D:
        return FourierSeries2D(self.coeffs[d])

    def copy(self):
        return FilterBank([c.copy() for c in self.coeffs], self.info)


@dataclass(frozen=True)
class TrainingSample:
    """Interpolated channel coefficients ``a^d = X^d b_d`` with a label and weight."""

    coeffs: tuple
    label: LabelSpec
    weight: float = 1.0

    @property
    def output_bandwidth(self):
        return tuple(max((c.shape[i] - 1) // 2 for c in self.coeffs) for i in range(2))

    @cached_property
    def label_coeffs(self):
        return label_coeffs(self.label, self.output_bandwidth).coeffs

    def with_weight(self, w):
        s = TrainingSample(self.coeffs, self.label, float(w))
        if "label_coeffs" in self.__dict__:
            object.__setattr__(s, "label_coeffs", self.__dict__["label_coeffs"])
        return s


def make_sample(features: FeatureMap, label: LabelSpec, kernel=DEFAULT_KERNEL) -> TrainingSample:
    return TrainingSample(tuple(features.transformed(kernel)), label)


@dataclass(frozen=True)
class SampleMemory:
    """Weighted training set, at most ``capacity`` samples; weights sum to one."""

    capacity: int = 400
    learning_rate: float = 0.0075
    samples: tuple = ()

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning rate must lie in (0, 1]")

    def __len__(self):
        return len(self.samples)

    @property
    def weights(self):
        return np.array([s.weight for s in self.samples])

    @cached_property
    def stacked(self):
        """Per-channel sample arrays ``(m, ...)``, labels ``(m, ...)`` and weights ``(m,)``."""
        if not self.samples:
            raise ValueError("empty sample memory")
        D = len(self.samples[0].coeffs)
        A = [np.stack([s.coeffs[d] for s in self.samples]) for d in range(D)]
        Y = np.stack([s.label_coeffs for s in self.samples])
        return A, Y, self.weights


def update_memory(memory: SampleMemory, new_sample: TrainingSample) -> SampleMemory:
    """Insert a sample with weight ``previous / (1 - lambda)``, evict, renormalize.

    Eviction removes the smallest weight, oldest first among ties. A learning
    rate of one keeps only the newest sample.
    """
    lam = memory.learning_rate
    if lam >= 1.0 or not memory.samples:
        return SampleMemory(memory.capacity, lam, (new_sample.with_weight(1.0),))
    raw = [s.weight for s in memory.samples]
    raw.append(raw[-1] / (1.0 - lam))
    samples = list(memory.samples) + [new_sample]
    while len(samples) > memory.capacity:
        i = int(np.argmin(raw))  # argmin returns the first (oldest) among ties
        del samples[i], raw[i]
    total = float(np.sum(raw))
    return SampleMemory(
        memory.capacity, lam, tuple(s.with_weight(r / total) for s, r in zip(samples, raw))
    )


def apply_operator(filt: FilterBank, sample, kernel=DEFAULT_KERNEL) -> FourierSeries2D:
    """Confidence coefficients ``s[k] = sum_d f^d[k] X^d[k] b_d[k]``.

    ``sample`` is a :class:`FeatureMap` or a :class:`TrainingSample`.
    """
    coeffs = sample.coeffs if isinstance(sample, TrainingSample) else sample.transformed(kernel)
    if len(coeffs) != len(filt.coeffs):
        raise ValueError(f"filter has {len(filt.coeffs)} channels, sample has {len(coeffs)}")
    for f, a in zip(filt.coeffs, coeffs):
        if f.shape != a.shape:
            raise ValueError(f"channel shape mismatch: filter {f.shape} vs sample {a.shape}")
    K = filt.output_bandwidth
    out = np.zeros(_block(K), complex)
    for f, a, Kd in zip(filt.coeffs, coeffs, filt.bandwidths):
        out[_inner_slice(K, Kd)] += f * a
    return FourierSeries2D(out, hermitian=False)


def objective(filt: FilterBank, memory: SampleMemory, penalty: PenaltySpec) -> float:
    """Weighted data residual plus penalty energy, both as coefficient sums."""
    A, Y, alpha = memory.stacked
    K = filt.output_bandwidth
    resid = -Y.copy()
    for f, a, Kd in zip(filt.coeffs, A, filt.bandwidths):
        resid[(slice(None),) + _inner_slice(K, Kd)] += a * f
    data = float(np.sum(alpha * np.sum(np.abs(resid) ** 2, axis=(1, 2))))
    W = penalty_matrix(penalty)
    reg = sum(float(np.sum(np.abs(coeff_convolve2d(W, f)) ** 2)) for f in filt.coeffs)
    return data + reg


class NormalOperator:
    """Matrix-free ``v -> (A^H G A + W^H W) v`` on stacked filter vectors."""

    def __init__(self, memory: SampleMemory, penalty: PenaltySpec):
        self.A, self.Y, self.alpha = memory.stacked
        self.W = penalty_matrix(penalty)
        self.channel_bandwidths = [((a.shape[1] - 1) // 2, (a.shape[2] - 1) // 2) for a in self.A]
        self.K = tuple(max(Kd[i] for Kd in self.channel_bandwidths) for i in range(2))
        self.template = FilterBank.zeros(self.channel_bandwidths)
        self.size = sum(c.size for c in self.template.coeffs)
        self.shape = (self.size, self.size)
        self.dtype = np.dtype(complex)

    def _split(self, v):
        return self.template.from_vector(v).coeffs

    def forward(self, blocks):
        """``A f``: one residual-shaped block per sample."""
        out = np.zeros((self.alpha.size,) + _block(self.K), complex)
        for a, f, Kd in zip(self.A, blocks, self.channel_bandwidths):
            out[(slice(None),) + _inner_slice(self.K, Kd)] += a * f
        return out

    def adjoint(self, r):
        """``A^H G r`` as per-channel blocks."""
        wr = self.alpha[:, None, None] * r
        return [
            np.einsum("jab,jab->ab", np.conj(a), wr[(slice(None),) + _inner_slice(self.K, Kd)])
            for a, Kd in zip(self.A, self.channel_bandwidths)
        ]

    def regularize(self, blocks):
        return [coeff_correlate2d(self.W, coeff_convolve2d(self.W, f), f.shape) for f in blocks]

    def matvec(self, v):
        blocks = self._split(v)
        data = self.adjoint(self.forward(blocks))
        reg = self.regularize(blocks)
        return np.concatenate([(d + r).ravel() for d, r in zip(data, reg)])

    __call__ = matvec

    def rhs(self):
        return np.concatenate([b.ravel() for b in self.adjoint(self.Y)])


def assemble_normal_operator(memory: SampleMemory, penalty: PenaltySpec):
    """Return ``(operator, rhs)`` for the normal equations of the current memory."""
    op = NormalOperator(memory, penalty)
    return op, op.rhs()


def solve_cg(operator, rhs, init: FilterBank, iters: int, tol: float | None = None, callback=None) -> FilterBank:
    """Run up to ``iters`` conjugate gradient steps from ``init``.

    Stops early when the residual norm drops below ``tol * |rhs|``. On a
    curvature breakdown the current iterate is returned with
    ``info["breakdown"] = True``.
    """
    x = init.to_vector().astype(complex)
    r = rhs - operator(x)
    p = r.copy()
    rs = float(np.vdot(r, r).real)
    bnorm = float(np.linalg.norm(rhs)) or 1.0
    info = {"iterations": 0, "breakdown": False, "residual": np.sqrt(rs)}
    for i in range(iters):
        if rs == 0.0 or (tol is not None and np.sqrt(rs) <= tol * bnorm):
            break
        Ap = operator(p)
        curv = float(np.vdot(p, Ap).real)
        if not curv > 1e-300:
            log.warning("CG breakdown at iteration %d (curvature %.3g)", i, curv)
            info["breakdown"] = True
            break
        step = rs / curv
        x = x + step * p
        r = r - step * Ap
        rs_new = float(np.vdot(r, r).real)
        p = r + (rs_new / rs) * p
        rs = rs_new
        info["iterations"] = i + 1
        info["residual"] = np.sqrt(rs)
        if callback is not None:
            callback(init.from_vector(x))
    out = init.from_vector(x)
    out.info = info
    return out


def closed_form_filter(memory: SampleMemory, beta: float) -> FilterBank:
    """Per-coefficient solution for one channel and a constant penalty ``beta``."""
    A, Y, alpha = memory.stacked
    if len(A) != 1:
        raise ValueError("closed form applies to single-channel memories only")
    a = A[0]
    Kd = ((a.shape[1] - 1) // 2, (a.shape[2] - 1) // 2)
    K = ((Y.shape[1] - 1) // 2, (Y.shape[2] - 1) // 2)
    y = Y[(slice(None),) + _inner_slice(K, Kd)]
    num = np.einsum("j,jab,jab->ab", alpha, np.conj(a), y)
    den = np.einsum("j,jab->ab", alpha, np.abs(a) ** 2) + beta**2
    return FilterBank([num / den])


def train(memory: SampleMemory, penalty: PenaltySpec, init: FilterBank | None = None, iters: int = 100, tol=None):
    """Assemble the normal equations for ``memory`` and run CG from ``init``."""
    op, b = assemble_normal_operator(memory, penalty)
    if init is None:
        init = FilterBank.zeros(op.channel_bandwidths)
    return solve_cg(op, b, init, iters, tol=tol)
