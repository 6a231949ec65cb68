"""Pyramidal feature-point tracking with single-channel continuous filters.

Each point keeps an independent filter per pyramid level. A filter is the
per-coefficient closed-form solution over all past samples, stored as running
weighted sums of ``conj(a) y`` and ``|a|^2`` whose weights follow the
``alpha_j = alpha_{j-1} / (1 - lambda)`` recurrence; that is exactly the
closed form over an unbounded sample memory, at O(1) cost per frame.

Patches are real, so every per-point spectrum is kept as its half
``k2 = 0..K`` (all ``k1``, centered); :func:`half_to_full` restores the full
centered block.

``mode="mosse"`` switches to the MOSSE baseline: flat interpolation
coefficients, labels rounded to the pixel lattice and grid-only localization.

Image positions are ``(x, y)`` pixels; arrays are indexed ``[row, col]``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from . import kernels
from .interp import flat_coeffs, interp_coeffs
from .learner import FilterBank, SampleMemory, TrainingSample

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PyramidConfig:
    """Point-tracker settings.

    ``refine_passes`` re-runs detection at the finest level that many extra
    times with the window re-centered on the latest estimate.
    """

    levels: int = 3
    window: int = 31
    scale_step: float = 2.0
    learning_rate: float = 0.1
    beta: float = 1e-4
    newton_iters: int = 5
    newton_tol: float = 1e-6
    sigma_px: float = 1.5
    lost_ratio: float = 0.15
    score_history: int = 25
    refine_passes: int = 1
    mode: str = "continuous"

    def __post_init__(self):
        if self.window % 2 != 1 or self.window < 3:
            raise ValueError("window must be odd and at least 3")
        if self.levels < 1:
            raise ValueError("need at least one pyramid level")
        if self.scale_step != 2.0:
            raise ValueError("only 2x2 box-averaged pyramids are supported (scale_step=2)")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning rate must lie in (0, 1]")
        if self.mode not in ("continuous", "mosse"):
            raise ValueError(f"unknown mode {self.mode!r}")


def build_pyramid(image, levels):
    """Level 0 is the image; each further level halves it by 2x2 box averaging."""
    img = np.asarray(image, dtype=float)
    pyr = [img]
    for _ in range(levels - 1):
        a = pyr[-1]
        h, w = (a.shape[0] // 2) * 2, (a.shape[1] // 2) * 2
        a = a[:h, :w]
        pyr.append(0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2]))
    return pyr


def to_level(points, level):
    """Map full-resolution pixel coordinates to a pyramid level's pixel grid."""
    s = 2.0**level
    return (np.asarray(points, float) + 0.5) / s - 0.5


def hann_periodic(n, center=None):
    """Periodic Hann window of length ``n``; ``center`` (array) shifts its peak per row."""
    if center is None:
        return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    c = np.asarray(center, float)[..., None]
    return 0.5 - 0.5 * np.cos(2 * np.pi * (np.arange(n) - c + n / 2) / n)


def centered_window(rc, origins, window):
    """Per-patch separable Hann windows peaking at the sub-pixel point ``rc``."""
    q = np.asarray(rc, float) - origins
    return hann_periodic(window, q[:, 0])[:, :, None] * hann_periodic(window, q[:, 1])[:, None, :]


def gather_patches(image, origins, window):
    """Raw ``window x window`` patches at integer ``(row, col)`` origins, border replicated."""
    o = np.asarray(origins, dtype=np.int64)
    off = np.arange(window)
    rows = np.clip(o[:, 0, None] + off, 0, image.shape[0] - 1)
    cols = np.clip(o[:, 1, None] + off, 0, image.shape[1] - 1)
    return image[rows[:, :, None], cols[:, None, :]]


def normalize(patches, window_fn=None):
    """Zero mean, unit energy, then the window; zero-energy patches become zeros."""
    p = patches - patches.mean(axis=(-2, -1), keepdims=True)
    energy = np.sqrt(np.einsum("...ij,...ij->...", p, p))[..., None, None]
    ok = energy > 1e-12
    p *= np.where(ok, 1.0 / np.where(ok, energy, 1.0), 0.0)
    if window_fn is not None:
        p *= window_fn
    return p


def preprocess(patches, window_fn=None):
    """log(1+p), zero mean, unit energy, then the separable window."""
    return normalize(np.log1p(np.maximum(patches, 0.0)), window_fn)


def extract_patch(image, center, window, level=0):
    """Preprocessed patch around ``center`` (x, y) on the ``level``-th pyramid image.

    The window peaks at the sub-pixel position of ``center`` so the point stays
    at the window's center whatever its fractional offset.
    """
    img = build_pyramid(image, level + 1)[level]
    c = to_level(np.asarray(center, float)[None, ::-1], level)
    origin = np.rint(c).astype(np.int64) - window // 2
    return preprocess(gather_patches(img, origin, window), centered_window(c, origin, window))[0]


def half_to_full(half):
    """Full centered coefficients from the ``k2 >= 0`` half of a hermitian block."""
    h = np.asarray(half)
    K = h.shape[-1] - 1
    return np.concatenate([np.conj(h[..., ::-1, K:0:-1]), h], axis=-1)


def full_to_half(full):
    K = (full.shape[-1] - 1) // 2
    return np.asarray(full)[..., K:]


class SpectralEngine:
    """Half-spectrum transforms for stacks of ``N x N`` real patches.

    Both axes run as small dense DFT matrices (faster than FFTs of prime
    length at this size); interpolation coefficients are folded in.
    """

    def __init__(self, window, interp="bspline"):
        N = window
        K = N // 2
        self.N, self.K = N, K
        n = np.arange(N)
        k1 = np.arange(-K, K + 1)
        k2 = np.arange(K + 1)
        b = flat_coeffs(N, K) if interp == "flat" else interp_coeffs(N, K)
        # real axis: columns interleave Re/Im of b2[k2] exp(-2i pi n k2 / N)
        F2 = np.exp(-2j * np.pi * np.outer(n, k2) / N) * b[K:]
        self.fwd_cols = np.ascontiguousarray(F2).view(float).reshape(N, 2 * (K + 1))
        self.fwd_rows = b[:, None] * np.exp(-2j * np.pi * np.outer(k1, n) / N)
        self.inv_rows = np.exp(2j * np.pi * np.outer(n, k1) / N)
        wt = np.full(K + 1, 2.0)
        wt[0] = 1.0
        E2 = wt * np.exp(2j * np.pi * np.outer(n, k2) / N)  # (n2, k2)
        inv = np.empty((2 * (K + 1), N))
        inv[0::2] = E2.real.T
        inv[1::2] = -E2.imag.T
        self.inv_cols = inv
        self.bhat = np.outer(b, b[K:])

    def forward(self, patches):
        """Interpolated half spectra ``(P, N, K+1)`` of real patches ``(P, N, N)``."""
        P, N = patches.shape[0], self.N
        rows = (patches.reshape(P * N, N) @ self.fwd_cols).view(complex).reshape(P, N, self.K + 1)
        return np.matmul(self.fwd_rows, rows)

    def grid(self, half):
        """Real series values on the ``N x N`` lattice ``t = n / N``."""
        P, N = half.shape[0], self.N
        Z = np.matmul(self.inv_rows, half)
        return (Z.view(float).reshape(P * N, -1) @ self.inv_cols).reshape(P, N, N)

    def labels(self, u, sigma):
        """Separable factors ``(P, N)`` and ``(P, K+1)`` of periodic Gaussian label half spectra."""
        K = self.K
        k1 = np.arange(-K, K + 1)
        k2 = np.arange(K + 1)
        amp = np.sqrt(2 * np.pi) * sigma
        y1 = amp * np.exp(-2 * (sigma * np.pi * k1) ** 2 - 2j * np.pi * np.multiply.outer(u[:, 0], k1))
        y2 = amp * np.exp(-2 * (sigma * np.pi * k2) ** 2 - 2j * np.pi * np.multiply.outer(u[:, 1], k2))
        return y1, y2


@dataclass
class LevelModel:
    """Running closed-form sums for one pyramid level of a batch of points (half spectra)."""

    num: np.ndarray  # (P, N, K+1) complex, sum alpha conj(a) y
    den: np.ndarray  # (P, N, K+1) real, sum alpha |a|^2
    filt: np.ndarray  # (P, N, K+1) current closed-form filter
    newest: np.ndarray  # (P,) normalized weight of the newest sample
    count: np.ndarray  # (P,) samples absorbed
    last_a: np.ndarray  # (P, N, K+1) newest sample
    last_y1: np.ndarray  # (P, N) newest label, first factor
    last_y2: np.ndarray  # (P, K+1) newest label, second factor

    @classmethod
    def empty(cls, P, N):
        shape = (P, N, N // 2 + 1)
        return cls(
            np.zeros(shape, complex),
            np.zeros(shape),
            np.zeros(shape, complex),
            np.zeros(P),
            np.zeros(P, np.int64),
            np.zeros(shape, complex),
            np.zeros((P, N), complex),
            np.zeros((P, N // 2 + 1), complex),
        )

    @property
    def last_y(self):
        return self.last_y1[:, :, None] * self.last_y2[:, None, :]

    def take(self, idx):
        return LevelModel(*(np.array(getattr(self, f)[idx]) for f in self.__dataclass_fields__))


@dataclass
class PointState:
    position: tuple
    levels: list = field(repr=False)  # one LevelModel slice (batch of 1) per level
    status: str = "tracked"
    scores: tuple = ()

    def filter_bank(self, level):
        return FilterBank([half_to_full(self.levels[level].filt[0])])

    def last_sample_memory(self, level):
        """The newest sample of a level as a one-element SampleMemory."""
        m = self.levels[level]
        s = TrainingSample((half_to_full(m.last_a[0]),), None, 1.0)
        object.__setattr__(s, "label_coeffs", half_to_full(m.last_y[0]))
        return SampleMemory(capacity=1, learning_rate=1.0, samples=(s,))


def _rows(arr, sel):
    return arr if sel is None else arr[sel]


class PointTracker:
    """Track a batch of points through an image sequence."""

    def __init__(self, config: PyramidConfig = PyramidConfig()):
        self.config = config
        self.N = config.window
        self.K = self.N // 2
        mosse = config.mode == "mosse"
        self.offset = 0.0 if mosse else 0.5
        self.engine = SpectralEngine(self.N, "flat" if mosse else "bspline")
        self.sigma = config.sigma_px / self.N
        self.positions = np.zeros((0, 2))
        self.tracked = np.zeros(0, bool)
        self.models = []
        self.last_scores = np.zeros(0)
        self._history = np.zeros((0, config.score_history))
        self._hist_len = np.zeros(0, np.int64)

    # -- per-level building blocks -----------------------------------------

    def _levels(self, image):
        """Pyramid of log images, edge-padded for patch gathering."""
        return [np.pad(np.log1p(np.maximum(a, 0.0)), self.N, mode="edge") for a in build_pyramid(image, self.config.levels)]

    def _origins(self, rc_level):
        return np.rint(rc_level).astype(np.int64) - self.K

    def _transform(self, padded, rc, origins):
        N = self.N
        view = sliding_window_view(padded, (N, N))
        p = view[origins[:, 0] + N, origins[:, 1] + N]
        P = p.shape[0]
        mean = p.reshape(P, -1).mean(axis=1)
        p -= mean[:, None, None]
        energy = np.sqrt(np.einsum("pij,pij->p", p, p))
        ok = energy > 1e-12
        scale = np.where(ok, 1.0 / np.where(ok, energy, 1.0), 0.0)
        q = rc - origins
        p *= (scale[:, None] * hann_periodic(N, q[:, 0]))[:, :, None]
        p *= hann_periodic(N, q[:, 1])[:, None, :]
        return self.engine.forward(p)

    def _labels(self, rc_level, origins):
        q = rc_level - origins
        if self.config.mode == "mosse":
            q = np.rint(q)
        return self.engine.labels((q + self.offset) / self.N, self.sigma)

    def _grid_peak(self, s):
        vals = self.engine.grid(s)
        P = vals.shape[0]
        flat = np.argmax(vals.reshape(P, -1), axis=1)
        i1, i2 = np.divmod(flat, self.N)
        return np.stack([i1, i2], axis=1) / self.N, vals.reshape(P, -1)[np.arange(P), flat]

    def _locate(self, s, t0=None, iters=None):
        iters = self.config.newton_iters if iters is None else iters
        grid_only = self.config.mode == "mosse" or iters <= 0
        if t0 is None or grid_only:
            t0, score = self._grid_peak(s)
            if grid_only:
                return t0, score
        t, score, _, _ = kernels.newton_refine_batch(s, t0, iters, self.config.newton_tol, half=True)
        return t, score

    def _absorb(self, model, idx, a, y1, y2):
        lam = self.config.learning_rate
        count = model.count[idx]
        if lam >= 1.0:
            c = np.ones(idx.size)
        else:
            prev = model.newest[idx]
            c = np.where(count == 0, 1.0, 1.0 / ((1.0 - lam) / np.where(prev > 0, prev, 1.0) + 1.0))
        kernels.absorb_samples(model.num, model.den, model.filt, a, y1, y2, c, idx, self.config.beta**2)
        model.newest[idx] = c
        model.count[idx] += 1
        if idx.size == len(model.count):
            model.last_a, model.last_y1, model.last_y2 = a, y1, y2
        else:
            model.last_a[idx] = a
            model.last_y1[idx] = y1
            model.last_y2[idx] = y2

    def _train(self, levels, idx, detections=None):
        """Absorb a sample per level at the current positions of points ``idx``.

        ``detections`` maps a level to the ``(origins, spectra)`` of its last
        detection pass; those patches are reused when the point is still near
        their center.
        """
        for lvl, padded in enumerate(levels):
            rc = to_level(self.positions[idx, ::-1], lvl)
            if detections is not None and lvl in detections:
                origins, a = detections[lvl]
                far = np.any(np.abs(rc - origins - self.K) > self.N / 4, axis=1)
                if np.any(far):
                    origins = origins.copy()
                    a = a.copy()
                    origins[far] = self._origins(rc[far])
                    a[far] = self._transform(padded, rc[far], origins[far])
            else:
                origins = self._origins(rc)
                a = self._transform(padded, rc, origins)
            self._absorb(self.models[lvl], idx, a, *self._labels(rc, origins))

    # -- public API ---------------------------------------------------------

    def init(self, image, points):
        """Start tracking ``points`` (an (n, 2) array of x, y) on ``image``."""
        pts = np.asarray(points, float).reshape(-1, 2)
        P = len(pts)
        self.positions = pts.copy()
        self.tracked = np.ones(P, bool)
        self.models = [LevelModel.empty(P, self.N) for _ in range(self.config.levels)]
        self.last_scores = np.full(P, np.nan)
        self._history = np.zeros((P, self.config.score_history))
        self._hist_len = np.zeros(P, np.int64)
        self._check_bounds(np.shape(image))
        idx = np.flatnonzero(self.tracked)
        if idx.size:
            self._train(self._levels(image), idx)
        return self

    def _check_bounds(self, shape):
        h, w = shape[:2]
        x, y = self.positions[:, 0], self.positions[:, 1]
        inside = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
        self.tracked &= inside

    def step(self, image):
        """Track all live points into ``image``; returns positions (x, y)."""
        cfg = self.config
        idx = np.flatnonzero(self.tracked)
        if idx.size == 0:
            return self.positions
        sel = None if idx.size == len(self.positions) else idx
        levels = self._levels(image)
        rc_full = self.positions[idx, ::-1].copy()
        detections = {}
        score = None
        for lvl in range(cfg.levels - 1, -1, -1):
            filt = _rows(self.models[lvl].filt, sel)
            reps = 1 + (max(0, cfg.refine_passes) if lvl == 0 else 0)
            for rep in range(reps):
                rc = to_level(rc_full, lvl)
                origins = self._origins(rc)
                a = self._transform(levels[lvl], rc, origins)
                # refinement passes start Newton at the predicted peak
                t0 = None if rep == 0 else (rc - origins + self.offset) / self.N
                # a pass followed by a refinement only needs a rough peak
                iters = min(2, cfg.newton_iters) if rep < reps - 1 else None
                t, score = self._locate(filt * a, t0, iters)
                d = t * self.N - self.offset - (rc - origins)
                d = (d + self.N / 2) % self.N - self.N / 2
                rc_full = rc_full + d * 2.0**lvl
            detections[lvl] = (origins, a)
        self.positions[idx] = rc_full[:, ::-1]
        self.last_scores[idx] = score
        self._check_bounds(np.shape(image))
        self._flag_weak(idx, score)
        keep = self.tracked[idx]
        if np.any(keep):
            if not np.all(keep):
                detections = {k: (o[keep], a[keep]) for k, (o, a) in detections.items()}
            self._train(levels, idx[keep], detections)
        return self.positions

    def _flag_weak(self, idx, score):
        """Lose points whose peak falls below ``lost_ratio`` x their running median."""
        n = self._hist_len[idx]
        H = self._history.shape[1]
        med = np.full(idx.size, -np.inf)
        for length in np.unique(np.minimum(n, H)):
            if length == 0:
                continue
            grp = np.flatnonzero(np.minimum(n, H) == length)
            med[grp] = np.median(self._history[idx[grp], :length], axis=1)
        weak = score < self.config.lost_ratio * med
        if np.any(weak):
            log.debug("%d points lost on weak response", int(weak.sum()))
        self.tracked[idx[weak]] = False
        self._history[idx, n % H] = score
        self._hist_len[idx] += 1

    def run(self, frames, points):
        """Track ``points`` from the first frame through the sequence.

        Returns trajectories ``(F, n, 2)`` (NaN once lost) and the final
        tracked mask.
        """
        frames = iter(frames)
        self.init(next(frames), points)
        traj = [np.where(self.tracked[:, None], self.positions, np.nan)]
        for img in frames:
            self.step(img)
            traj.append(np.where(self.tracked[:, None], self.positions, np.nan))
        return np.stack(traj), self.tracked.copy()

    # -- single-point views -------------------------------------------------

    def state(self, i) -> PointState:
        n = min(self._hist_len[i], self._history.shape[1])
        return PointState(
            tuple(self.positions[i]),
            [m.take([i]) for m in self.models],
            "tracked" if self.tracked[i] else "lost",
            tuple(np.roll(self._history[i], -(self._hist_len[i] % self._history.shape[1]))[-n:]) if n else (),
        )

    @classmethod
    def from_states(cls, states, config: PyramidConfig = PyramidConfig()):
        tr = cls(config)
        tr.positions = np.array([s.position for s in states], float)
        tr.tracked = np.array([s.status == "tracked" for s in states])
        tr.models = [
            LevelModel(*(np.concatenate([getattr(s.levels[l], f) for s in states]) for f in LevelModel.__dataclass_fields__))
            for l in range(config.levels)
        ]
        P = len(states)
        tr.last_scores = np.full(P, np.nan)
        tr._history = np.zeros((P, config.score_history))
        tr._hist_len = np.zeros(P, np.int64)
        for i, s in enumerate(states):
            h = np.asarray(s.scores[-config.score_history:], float)
            tr._history[i, : h.size] = h
            tr._hist_len[i] = h.size
        return tr


def init_point(image, point, config: PyramidConfig = PyramidConfig()) -> PointState:
    return PointTracker(config).init(image, [point]).state(0)


def track_point(state: PointState, image, config: PyramidConfig = PyramidConfig()) -> PointState:
    """Advance one point by one frame."""
    if state.status != "tracked":
        raise ValueError("point is not being tracked")
    tr = PointTracker.from_states([state], config)
    tr.step(image)
    return tr.state(0)


def mosse_mode(state: PointState, image, config: PyramidConfig = PyramidConfig()) -> PointState:
    """:func:`track_point` with the MOSSE substitutions."""
    return track_point(state, image, replace(config, mode="mosse"))


def corner_response(image):
    """Minimum eigenvalue of the 3x3-summed gradient structure tensor."""
    img = np.asarray(image, float)
    gy, gx = np.gradient(img)
    a = ndimage.uniform_filter(gx * gx, 3, mode="nearest")
    b = ndimage.uniform_filter(gx * gy, 3, mode="nearest")
    c = ndimage.uniform_filter(gy * gy, 3, mode="nearest")
    return 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)


def select_points(image, max_points, window=31, quality=0.01, margin=None, min_distance=None):
    """Shi-Tomasi corners, greedy suppression within ``min_distance``, best first.

    ``min_distance`` defaults to ``window / 2`` and ``margin`` (border
    exclusion) to ``window // 2``. Returns an (n, 2) array of (x, y)
    positions, n <= max_points.
    """
    R = corner_response(image)
    top = float(R.max()) if R.size else 0.0
    if top <= 1e-12 or max_points < 1:
        return np.zeros((0, 2))
    margin = window // 2 if margin is None else margin
    radius = window / 2 if min_distance is None else float(min_distance)
    peaks = (R == ndimage.maximum_filter(R, 3, mode="nearest")) & (R >= quality * top)
    if margin:
        peaks[:margin] = peaks[-margin:] = False
        peaks[:, :margin] = peaks[:, -margin:] = False
    rows, cols = np.nonzero(peaks)
    order = np.argsort(-R[rows, cols], kind="stable")
    chosen = np.empty((max_points, 2))
    n = 0
    for i in order:
        p = (cols[i], rows[i])
        if n and np.min((chosen[:n, 0] - p[0]) ** 2 + (chosen[:n, 1] - p[1]) ** 2) < radius * radius:
            continue
        chosen[n] = p
        n += 1
        if n >= max_points:
            break
    return chosen[:n].copy()
