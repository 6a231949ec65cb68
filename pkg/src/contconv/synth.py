"""Synthetic image sequences with exact ground-truth point tracks.

Frame ``f`` shows the reference texture warped by the affine map
``x -> M_f x + t_f``, i.e. ``I_f(x) = T(M_f^{-1}(x - t_f))``. Textures are
analytic, so frames are evaluated directly at warped coordinates without
resampling. Plane-wave textures stay plane waves under any affine warp,
which makes rendering a single complex matrix product per frame.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

TEXTURES = ("noise", "checkerboard", "blobs")
MOTIONS = ("translation", "sinusoid", "affine")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic sequence.

    motion parameters (per frame):
      translation: ``velocity`` (px)
      sinusoid: ``amplitude`` (px, per axis) and ``period`` (frames)
      affine: ``rotation_deg``, ``scale_rate``, ``velocity``; about the image center
    """

    shape: tuple = (256, 256)
    frames: int = 20
    texture: str = "noise"
    motion: str = "translation"
    velocity: tuple = (0.0, 0.0)
    amplitude: tuple = (3.0, 2.0)
    period: float = 20.0
    rotation_deg: float = 0.0
    scale_rate: float = 0.0
    max_frequency: float = 0.15
    components: int = 160
    noise_snr_db: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.texture not in TEXTURES:
            raise ValueError(f"texture must be one of {TEXTURES}")
        if self.motion not in MOTIONS:
            raise ValueError(f"motion must be one of {MOTIONS}")
        if self.frames < 1:
            raise ValueError("need at least one frame")

    def to_dict(self):
        return asdict(self)


def warp(spec: SyntheticSpec, f):
    """Affine map ``(M, t)`` taking reference positions (x, y) to frame ``f``."""
    v = np.asarray(spec.velocity, float)
    if spec.motion == "translation":
        return np.eye(2), f * v
    if spec.motion == "sinusoid":
        w = 2 * np.pi * f / spec.period
        ax, ay = spec.amplitude
        return np.eye(2), np.array([ax * np.sin(w), ay * (1 - np.cos(w))])
    th = np.deg2rad(spec.rotation_deg) * f
    s = (1 + spec.scale_rate) ** f
    M = s * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    c = np.array([(spec.shape[1] - 1) / 2, (spec.shape[0] - 1) / 2])
    return M, c - M @ c + f * v


class PlaneWaves:
    """``T(u) = sum_j amp_j cos(2 pi nu_j . u + phase_j)``."""

    def __init__(self, freqs, amps, phases):
        self.freqs = np.asarray(freqs, float)
        self.amps = np.asarray(amps, float)
        self.phases = np.asarray(phases, float)

    def render(self, shape, M, t):
        Minv = np.linalg.inv(M)
        nu = self.freqs @ Minv  # rows are M^{-T} nu
        ph = self.phases - 2 * np.pi * self.freqs @ (Minv @ t)
        H, W = shape
        Ex = np.exp(2j * np.pi * np.outer(np.arange(W), nu[:, 0]))
        Ey = np.exp(2j * np.pi * np.outer(np.arange(H), nu[:, 1]))
        return ((Ey * (self.amps * np.exp(1j * ph))) @ Ex.T).real


class Blobs:
    """Sum of isotropic Gaussians."""

    def __init__(self, centers, sigmas, amps):
        self.centers = np.asarray(centers, float)
        self.sigmas = np.asarray(sigmas, float)
        self.amps = np.asarray(amps, float)

    def render(self, shape, M, t):
        H, W = shape
        y, x = np.mgrid[0:H, 0:W].astype(float)
        Minv = np.linalg.inv(M)
        ux = Minv[0, 0] * (x - t[0]) + Minv[0, 1] * (y - t[1])
        uy = Minv[1, 0] * (x - t[0]) + Minv[1, 1] * (y - t[1])
        out = np.zeros(shape)
        for (cx, cy), s, a in zip(self.centers, self.sigmas, self.amps):
            out += a * np.exp(-((ux - cx) ** 2 + (uy - cy) ** 2) / (2 * s * s))
        return out


def make_texture(spec: SyntheticSpec, rng):
    H, W = spec.shape
    if spec.texture == "noise":
        n = spec.components
        r = spec.max_frequency * np.sqrt(rng.uniform(0.02, 1.0, n))
        ang = rng.uniform(0, 2 * np.pi, n)
        freqs = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
        amps = rng.rayleigh(1.0, n) / (1 + (r / (0.5 * spec.max_frequency)) ** 2)
        return PlaneWaves(freqs, amps, rng.uniform(0, 2 * np.pi, n))
    if spec.texture == "checkerboard":
        # product of two 3-harmonic square waves, expanded into plane waves
        P = 24.0
        rot = rng.uniform(0, np.pi / 2)
        R = np.array([[np.cos(rot), -np.sin(rot)], [np.sin(rot), np.cos(rot)]])
        freqs, amps, phases = [], [], []
        for h1 in (1, 3):
            for h2 in (1, 3):
                a = (4 / np.pi) ** 2 / (h1 * h2) / 2
                for sgn, ph in ((-1, 0.0), (1, np.pi)):
                    freqs.append(R @ np.array([h1 / P, sgn * h2 / P]))
                    amps.append(a)
                    phases.append(ph)
        return PlaneWaves(freqs, amps, phases)
    n = max(8, int(H * W / 400))
    centers = np.stack([rng.uniform(-20, W + 20, n), rng.uniform(-20, H + 20, n)], axis=1)
    return Blobs(centers, rng.uniform(3.0, 8.0, n), rng.choice([-1.0, 1.0], n) * rng.uniform(0.5, 1.0, n))


@dataclass
class SyntheticSequence:
    spec: SyntheticSpec
    frames: np.ndarray  # (F, H, W)
    clean: np.ndarray = field(repr=False)

    def tracks(self, seeds):
        """Ground-truth positions ``(F, n, 2)`` of reference points ``seeds`` (x, y)."""
        p = np.asarray(seeds, float).reshape(-1, 2)
        out = []
        for f in range(self.spec.frames):
            M, t = warp(self.spec, f)
            out.append(p @ M.T + t)
        return np.stack(out)

    def flow(self, f):
        """Dense forward flow ``(H, W, 2)`` from frame ``f`` to ``f + 1``."""
        M0, t0 = warp(self.spec, f)
        M1, t1 = warp(self.spec, f + 1)
        A = M1 @ np.linalg.inv(M0)
        b = t1 - A @ t0
        H, W = self.spec.shape
        y, x = np.mgrid[0:H, 0:W].astype(float)
        pts = np.stack([x, y], axis=-1)
        return pts @ A.T + b - pts


def generate_synthetic(spec: SyntheticSpec) -> SyntheticSequence:
    """Render the sequence; intensities span roughly [28, 228]."""
    rng = np.random.default_rng(spec.seed)
    tex = make_texture(spec, rng)
    ref = tex.render(spec.shape, np.eye(2), np.zeros(2))
    lo, hi = float(ref.min()), float(ref.max())
    scale = 200.0 / (hi - lo) if hi > lo else 0.0
    clean = np.stack([28.0 + scale * (tex.render(spec.shape, *warp(spec, f)) - lo) for f in range(spec.frames)])
    frames = clean
    if spec.noise_snr_db is not None:
        sd = clean.std() / 10 ** (spec.noise_snr_db / 20)
        frames = np.clip(clean + rng.normal(0, sd, clean.shape), 0, None)
    return SyntheticSequence(spec, frames, clean)


# Object-tracking corpus: (spec, box) pairs. The box is centered on the image
# center, so rotation and zoom keep the target center fixed up to the velocity.
OBJECT_CORPUS = (
    dict(texture="noise", motion="sinusoid", amplitude=(6.0, 4.0), period=12.0),
    dict(texture="blobs", motion="affine", rotation_deg=1.0, scale_rate=0.01, velocity=(1.0, 0.5)),
    dict(texture="checkerboard", motion="translation", velocity=(1.3, -0.7)),
    dict(texture="noise", motion="affine", rotation_deg=-1.5, velocity=(-1.0, 1.0), noise_snr_db=15.0),
    dict(texture="blobs", motion="sinusoid", amplitude=(5.0, 5.0), period=10.0, noise_snr_db=20.0),
    dict(texture="noise", motion="translation", velocity=(2.5, 1.5), noise_snr_db=10.0),
)


def object_corpus(shape=(192, 192), frames=20, target=32, seed=10):
    """Synthetic object sequences with a ``target``-px square box at the image center."""
    H, W = shape
    cx, cy = (W - 1) / 2, (H - 1) / 2
    box = (cx - target / 2, cy - target / 2, float(target), float(target))
    out = []
    for i, kw in enumerate(OBJECT_CORPUS):
        seq = generate_synthetic(SyntheticSpec(shape=shape, frames=frames, seed=seed + i, **kw))
        out.append((seq, box))
    return out
