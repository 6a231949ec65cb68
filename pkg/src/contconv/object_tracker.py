"""Single-object tracking with a multi-resolution continuous convolution filter.

The search region is a square of side ``5 sqrt(w h)`` centered on the target.
It is resampled to a base patch and turned into channels of different
resolution (handcrafted stand-ins for network activations). Every channel
covers the same region, so channel sample ``n`` of an ``N``-sample channel
sits at ``t = (n + 1/2) / N`` and the target center at ``t = 1/2``.

Training uses a weighted sample memory, a spatial penalty that is small on
the target and large on the background, and conjugate gradient iterations
(many at the first frame, a few warm-started ones afterwards).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .labels import LabelSpec, check_sigma, object_sigma
from .learner import (
    FeatureMap,
    FilterBank,
    SampleMemory,
    apply_operator,
    make_sample,
    train,
    update_memory,
)
from .localize import localize
from .regularizer import PenaltySpec

log = logging.getLogger(__name__)

CHANNEL_KINDS = ("gray", "grad")


@dataclass(frozen=True)
class FeatureExtractorSpec:
    """Ordered channel recipe: ``(kind, factor)`` pairs on a ``patch``-sized base.

    ``factor`` is the downsampling of the base patch (box average), so the
    channel has ``patch // factor`` samples per side.
    """

    channels: tuple = (("gray", 1), ("gray", 2), ("grad", 4))
    patch: int = 64

    def __post_init__(self):
        chans = tuple((str(k), int(f)) for k, f in self.channels)
        if not chans:
            raise ValueError("feature recipe needs at least one channel")
        for kind, f in chans:
            if kind not in CHANNEL_KINDS:
                raise ValueError(f"unknown channel kind {kind!r}")
            if f < 1 or self.patch % f:
                raise ValueError(f"factor {f} does not divide the base patch {self.patch}")
        object.__setattr__(self, "channels", chans)

    @property
    def resolutions(self):
        return [self.patch // f for _, f in self.channels]


@dataclass(frozen=True)
class ObjectConfig:
    features: FeatureExtractorSpec = field(default_factory=FeatureExtractorSpec)
    region_factor: float = 5.0
    scales: int = 5
    scale_step: float = 1.02
    learning_rate: float = 0.0075
    capacity: int = 400
    init_iters: int = 100
    cg_iters: int = 5
    newton_iters: int = 5
    sigma_factor: float = 1.0 / 16.0
    penalty: PenaltySpec | None = None  # None: raised cosine from_contrast on the target
    window: bool = True
    refine_passes: int = 1  # re-center the region on the estimate and localize again
    gain: float = 10.0  # channel rms; sets the data term against the penalty

    def __post_init__(self):
        if self.scales < 1 or self.scales % 2 == 0:
            raise ValueError("scales must be a positive odd number")
        if self.scale_step <= 1.0:
            raise ValueError("scale_step must exceed 1")

    @property
    def scale_exponents(self):
        h = self.scales // 2
        return np.arange(-h, h + 1)


@dataclass
class TargetState:
    center: tuple  # (x, y) px
    size: tuple  # (w, h) px
    scale: float
    filter: FilterBank
    memory: SampleMemory
    penalty: PenaltySpec
    config: ObjectConfig = field(default_factory=ObjectConfig)
    base_size: tuple = (1.0, 1.0)
    frame: int = 0
    scale_index: int = 0  # exponent chosen at the last step
    score: float = float("nan")

    @property
    def region_side(self):
        w, h = self.size
        return self.config.region_factor * np.sqrt(w * h)

    @property
    def box(self):
        (cx, cy), (w, h) = self.center, self.size
        return (cx - w / 2, cy - h / 2, w, h)


def _box_reduce(a, f):
    if f == 1:
        return a
    H, W = a.shape
    return a.reshape(H // f, f, W // f, f).mean(axis=(1, 3))


def sample_region(image, center, side, size):
    """Resample the square ``side`` px region at ``center`` (x, y) to ``size`` x ``size``.

    Each output sample averages its cell (supersampled bilinear reads), and
    reads outside the image replicate the border.
    """
    ss = int(np.clip(np.ceil(side / size), 1, 4))
    n = size * ss
    off = ((np.arange(n) + 0.5) / n - 0.5) * side
    rows = center[1] + off
    cols = center[0] + off
    coords = np.broadcast_arrays(rows[:, None], cols[None, :])
    vals = ndimage.map_coordinates(np.asarray(image, float), coords, order=1, mode="nearest")
    return _box_reduce(vals, ss)


def hann(n):
    """Symmetric window peaking at ``t = 1/2`` under the ``(n + 1/2) / N`` sampling."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * (np.arange(n) + 0.5) / n)


def extract_features(image, center, side, spec: FeatureExtractorSpec, window=True, gain=1.0) -> FeatureMap:
    base = sample_region(image, center, side, spec.patch) / 255.0
    grad = None
    chans = []
    for kind, f in spec.channels:
        if kind == "gray":
            x = _box_reduce(base, f)
        else:
            if grad is None:
                gy, gx = np.gradient(base)
                grad = np.hypot(gx, gy)
            x = _box_reduce(grad, f)
        x = x - x.mean()
        rms = np.sqrt(np.mean(x * x))
        x = x * (gain / rms) if rms > 1e-12 else np.zeros_like(x)
        if window:
            w = hann(x.shape[0])
            x = x * np.outer(w, w)
        chans.append(x)
    return FeatureMap(tuple(chans))


def _label(state_size, side, K, cfg: ObjectConfig):
    w, h = state_size
    sig = np.array(object_sigma((h, w), side)) * (16.0 * cfg.sigma_factor)
    # keep the label representable at the output bandwidth
    floor = 0.5 / (2 * np.asarray(K) + 1) * 1.001
    sig = np.maximum(sig, floor)
    check_sigma(sig, K)
    return LabelSpec((0.5, 0.5), tuple(sig))


def _training_sample(image, center, size, cfg: ObjectConfig):
    side = cfg.region_factor * np.sqrt(size[0] * size[1])
    fm = extract_features(image, center, side, cfg.features, cfg.window, cfg.gain)
    return make_sample(fm, _label(size, side, fm.output_bandwidth, cfg))


def _train(memory, penalty, init, iters):
    # the exact solution is hermitian; CG roundoff is not, and it grows along
    # poorly conditioned directions, so project back after each solve
    filt = train(memory, penalty, init=init, iters=iters)
    filt.coeffs = [0.5 * (c + np.conj(c[::-1, ::-1])) for c in filt.coeffs]
    return filt


def init_target(image, box, config: ObjectConfig | None = None) -> TargetState:
    """Start tracking the ``(x, y, w, h)`` box; trains from a zero filter."""
    cfg = config or ObjectConfig()
    x, y, w, h = (float(v) for v in box)
    if not (w > 0 and h > 0):
        raise ValueError(f"degenerate target box {box}")
    H, W = np.shape(image)
    if x < 0 or y < 0 or x + w > W or y + h > H:
        raise ValueError(f"target box {box} outside the {W}x{H} image")
    center, size = (x + w / 2, y + h / 2), (w, h)
    penalty = cfg.penalty or PenaltySpec.from_contrast(center=(0.5, 0.5))
    memory = update_memory(SampleMemory(cfg.capacity, cfg.learning_rate), _training_sample(image, center, size, cfg))
    filt = _train(memory, penalty, None, cfg.init_iters)
    return TargetState(center, size, 1.0, filt, memory, penalty, cfg, base_size=size)


def _locate(state, image, center, side):
    cfg = state.config
    fm = extract_features(image, center, side, cfg.features, cfg.window, cfg.gain)
    res = localize(apply_operator(state.filter, fm).coeffs, newton_iters=cfg.newton_iters)
    d = np.mod(res.position, 1.0) - 0.5  # (row, col) in period units
    return (center[0] + d[1] * side, center[1] + d[0] * side), res.score


def detect(state: TargetState, image):
    """Score every scale and refine the best; returns ``(exponent, center, score)``."""
    cfg = state.config
    best = None
    for s in cfg.scale_exponents:
        side = state.region_side * cfg.scale_step**s
        center, score = _locate(state, image, state.center, side)
        if best is None or score > best[2]:
            best = (int(s), center, score, side)
    s, center, score, side = best
    # the window is centered on the previous position, which biases large
    # displacements toward it; localizing again from the estimate removes most of it
    for _ in range(cfg.refine_passes):
        center, score = _locate(state, image, center, side)
    return s, center, score


def step(state: TargetState, image) -> TargetState:
    """Locate the target in ``image`` then update the memory and the filter."""
    cfg = state.config
    s, center, score = detect(state, image)
    scale = state.scale * cfg.scale_step**s
    size = (state.base_size[0] * scale, state.base_size[1] * scale)
    memory = update_memory(state.memory, _training_sample(image, center, size, cfg))
    filt = _train(memory, state.penalty, state.filter, cfg.cg_iters)
    return replace(
        state, center=center, size=size, scale=scale, filter=filt, memory=memory,
        frame=state.frame + 1, scale_index=s, score=float(score),
    )


def track_sequence(frames, box, config: ObjectConfig | None = None):
    """Track through ``frames``; returns centers ``(F, 2)``, sizes ``(F, 2)`` and scale indices ``(F,)``."""
    state = init_target(frames[0], box, config)
    centers, sizes, idx = [state.center], [state.size], [0]
    for f in frames[1:]:
        state = step(state, f)
        centers.append(state.center)
        sizes.append(state.size)
        idx.append(state.scale_index)
    return np.array(centers), np.array(sizes), np.array(idx)
