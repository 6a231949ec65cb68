"""Ground-truth track integration and endpoint-error scoring.

Tracks are ``(F, n, 2)`` arrays of (x, y) positions, NaN where a point is
lost or its ground truth has ended.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

INLIER_EPE = 3.0
PRECISION_THRESHOLDS = np.linspace(0.0, 4.0, 64)
HISTOGRAM_EDGES = np.append(np.linspace(0.0, 4.0, 17), np.inf)


def bilinear(field, x, y):
    """Sample ``field`` ``(H, W, C)`` at points inside ``[0, W-1] x [0, H-1]``."""
    H, W = field.shape[:2]
    x0 = np.clip(np.floor(x).astype(int), 0, W - 2 if W > 1 else 0)
    y0 = np.clip(np.floor(y).astype(int), 0, H - 2 if H > 1 else 0)
    x1, y1 = np.minimum(x0 + 1, W - 1), np.minimum(y0 + 1, H - 1)
    fx, fy = (x - x0)[:, None], (y - y0)[:, None]
    top = field[y0, x0] * (1 - fx) + field[y0, x1] * fx
    bot = field[y1, x0] * (1 - fx) + field[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def integrate_gt_tracks(flows, occlusion_masks, seeds):
    """Chain bilinear flow lookups from ``seeds`` through ``flows``.

    ``flows[f]`` maps frame ``f`` to ``f + 1``; the result has ``len(flows) + 1``
    frames. A track ends (NaN from then on) at the first frame whose
    nearest-pixel occlusion mask is set at the track position, or when the
    position leaves the image. ``occlusion_masks`` may be ``None``.
    """
    pos = np.asarray(seeds, float).reshape(-1, 2).copy()
    H, W = np.shape(flows[0])[:2]
    F = len(flows) + 1
    out = np.full((F, len(pos), 2), np.nan)
    alive = np.ones(len(pos), bool)
    for f in range(F):
        inside = (pos[:, 0] >= 0) & (pos[:, 0] <= W - 1) & (pos[:, 1] >= 0) & (pos[:, 1] <= H - 1)
        alive &= inside
        if occlusion_masks is not None and f < len(occlusion_masks):
            idx = np.flatnonzero(alive)
            r = np.clip(np.rint(pos[idx, 1]).astype(int), 0, H - 1)
            c = np.clip(np.rint(pos[idx, 0]).astype(int), 0, W - 1)
            alive[idx[np.asarray(occlusion_masks[f])[r, c].astype(bool)]] = False
        out[f, alive] = pos[alive]
        if f == F - 1 or not alive.any():
            break
        idx = np.flatnonzero(alive)
        pos[idx] += bilinear(np.asarray(flows[f], float), pos[idx, 0], pos[idx, 1])
    return out


def track_lengths(tracks):
    return np.sum(~np.isnan(tracks[..., 0]), axis=0)


@dataclass
class TrackReport:
    epe: np.ndarray  # (F, n), NaN without ground truth, inf for lost points
    inliers: np.ndarray  # (F, n) bool
    mean_inlier_epe: float
    inlier_ratio: float
    histogram: np.ndarray  # counts over HISTOGRAM_EDGES
    precision: np.ndarray  # at PRECISION_THRESHOLDS

    @property
    def valid(self):
        return ~np.isnan(self.epe)

    def precision_at(self, threshold):
        e = self.epe[self.valid]
        return float(np.mean(e < threshold)) if e.size else float("nan")

    def summary(self):
        n_valid = self.valid.sum(axis=0)
        per_point = []
        for i in range(self.epe.shape[1]):
            e = self.epe[:, i][self.valid[:, i]]
            fin = e[np.isfinite(e)]
            per_point.append(
                {
                    "frames": int(n_valid[i]),
                    "mean_epe": _num(fin.mean()) if fin.size else None,
                    "max_epe": _num(e.max()) if e.size else None,
                    "inlier_ratio": _num(np.mean(e < INLIER_EPE)) if e.size else None,
                }
            )
        return {
            "mean_inlier_epe": _num(self.mean_inlier_epe),
            "inlier_ratio": _num(self.inlier_ratio),
            "evaluated": int(self.valid.sum()),
            "histogram": [
                {"bin_left": _num(a), "bin_right": _num(b), "count": int(c)}
                for a, b, c in zip(HISTOGRAM_EDGES[:-1], HISTOGRAM_EDGES[1:], self.histogram)
            ],
            "precision": [
                {"threshold": _num(t), "precision": _num(p)} for t, p in zip(PRECISION_THRESHOLDS, self.precision)
            ],
            "points": per_point,
        }


def _num(v):
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def score(trajectories, gt_tracks) -> TrackReport:
    """Endpoint errors of index-aligned tracks.

    Entries without ground truth are skipped; a lost point where ground truth
    exists counts with infinite error (never an inlier).
    """
    tr = np.asarray(trajectories, float)
    gt = np.asarray(gt_tracks, float)
    if tr.shape != gt.shape:
        raise ValueError(f"trajectory shape {tr.shape} does not match ground truth {gt.shape}")
    has_gt = ~np.isnan(gt).any(axis=-1)
    epe = np.linalg.norm(tr - gt, axis=-1)
    epe = np.where(np.isnan(epe), np.inf, epe)
    epe[~has_gt] = np.nan
    e = epe[has_gt]
    inliers = has_gt & (np.nan_to_num(epe, nan=np.inf) < INLIER_EPE)
    inl = e[e < INLIER_EPE]
    hist, _ = np.histogram(e, HISTOGRAM_EDGES)
    if e.size:
        precision = np.array([np.mean(e < t) for t in PRECISION_THRESHOLDS])
    else:
        precision = np.full(PRECISION_THRESHOLDS.size, np.nan)
    return TrackReport(
        epe=epe,
        inliers=inliers,
        mean_inlier_epe=float(inl.mean()) if inl.size else float("nan"),
        inlier_ratio=float(inl.size / e.size) if e.size else float("nan"),
        histogram=hist,
        precision=precision,
    )


def report_json(report: TrackReport, config=None, extra=None) -> str:
    """Deterministic JSON text: sorted keys, fixed indentation, no NaN literals."""
    body = {"metrics": report.summary(), "config": config or {}}
    if extra:
        body.update(extra)
    return json.dumps(body, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_precision_csv(report: TrackReport, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["threshold", "precision"])
        for t, p in zip(PRECISION_THRESHOLDS, report.precision):
            w.writerow([repr(float(t)), repr(float(p))])


def write_histogram_csv(report: TrackReport, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count"])
        for a, b, c in zip(HISTOGRAM_EDGES[:-1], HISTOGRAM_EDGES[1:], report.histogram):
            w.writerow([repr(float(a)), repr(float(b)), int(c)])
