"""Compare the compiled kernels with the numpy fallback.

Times each hot kernel on tracker-sized inputs under both backends, then a
full single-scale tracking run with the tracker switched between them.

    python benchmarks/bench_kernels.py --points 300 --repeat 5
"""
import argparse
import time
from contextlib import contextmanager

import numpy as np

from contconv import _kernels_py, kernels
from contconv.point_tracker import PointTracker, PyramidConfig, select_points
from contconv.synth import SyntheticSpec, generate_synthetic

try:
    from contconv import _kernels
except ImportError:
    _kernels = None

NAMES = ("series_values", "series_derivatives", "newton_refine_batch", "absorb_samples")


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


@contextmanager
def backend(mod):
    saved = {n: getattr(kernels, n) for n in NAMES}
    for n in NAMES:
        setattr(kernels, n, getattr(mod, n))
    try:
        yield
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def kernel_cases(P, N, rng):
    K = N // 2
    half = rng.normal(size=(P, N, K + 1)) + 1j * rng.normal(size=(P, N, K + 1))
    half[:, :K, 0] = np.conj(half[:, :K:-1, 0])  # k2 = 0 column is hermitian in k1
    half[:, K, 0] = half[:, K, 0].real
    t = rng.uniform(size=(P, 2))
    shape = (P, N, K + 1)
    a = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    y1 = rng.normal(size=(P, N)) + 0j
    y2 = rng.normal(size=(P, K + 1)) + 0j
    c = np.full(P, 0.1)
    rows = np.arange(P)

    def absorb(mod):
        num, den, filt = np.zeros(shape, complex), np.ones(shape), np.zeros(shape, complex)
        return lambda: mod.absorb_samples(num, den, filt, a, y1, y2, c, rows, 1e-8)

    return {
        "series_values": lambda mod: (lambda: mod.series_values(half, t, half=True)),
        "series_derivatives": lambda mod: (lambda: mod.series_derivatives(half, t, half=True)),
        "newton_refine_batch": lambda mod: (lambda: mod.newton_refine_batch(half, t, 5, 1e-6, half=True)),
        "absorb_samples": absorb,
    }


def tracking_fps(mod, points, frames, size):
    seq = generate_synthetic(SyntheticSpec(shape=(size, size), frames=frames + 1, velocity=(0.4, 0.25), seed=2))
    seeds = select_points(seq.frames[0], points, 31, min_distance=8)
    with backend(mod):
        tr = PointTracker(PyramidConfig(levels=1))
        tr.init(seq.frames[0], seeds)
        t = time.perf_counter()
        for f in seq.frames[1:]:
            tr.step(f)
        elapsed = time.perf_counter() - t
    return frames / elapsed, tr.positions


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=300)
    ap.add_argument("--window", type=int, default=31)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--frames", type=int, default=20)
    ap.add_argument("--size", type=int, default=256)
    args = ap.parse_args(argv)

    mods = [("python", _kernels_py)]
    if _kernels is not None:
        mods.insert(0, ("cython", _kernels))
    else:
        print("compiled kernels not built; timing the fallback only")

    cases = kernel_cases(args.points, args.window, np.random.default_rng(0))
    print(f"{'kernel':<22}" + "".join(f"{name:>12}" for name, _ in mods) + ("     speedup" if len(mods) > 1 else ""))
    for kname, make in cases.items():
        ts = [best_of(make(mod), args.repeat) for _, mod in mods]
        line = f"{kname:<22}" + "".join(f"{1e3 * t:>10.3f}ms" for t in ts)
        if len(ts) > 1:
            line += f"{ts[1] / ts[0]:>11.1f}x"
        print(line)

    print(f"\ntracking {args.points} points, {args.size}x{args.size}, single scale, {args.frames} frames")
    results = [(name,) + tracking_fps(mod, args.points, args.frames, args.size) for name, mod in mods]
    for name, fps, _ in results:
        print(f"  {name:<8} {fps:6.1f} frames/s")
    if len(results) > 1:
        diff = np.nanmax(np.abs(results[0][2] - results[1][2]))
        print(f"  max position difference between backends: {diff:.2e} px")


if __name__ == "__main__":
    main()
