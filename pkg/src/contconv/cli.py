"""Command-line entry points.

    contconv synth --out seq/ --motion translation --velocity 0.3 0.7
    contconv track-points --frames seq/ --out run/
    contconv track-object --frames seq/ --box 108 108 40 40 --out run/
    contconv score --tracks run/tracks.json --gt-flows seq/ --out run/
    contconv selftest

Every subcommand accepts ``--config FILE``: a JSON object whose keys are
option names (``learning_rate``, ``velocity``, ...). Flags given on the
command line override the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import kernels
from .evaluate import (
    integrate_gt_tracks,
    report_json,
    score,
    write_histogram_csv,
    write_precision_csv,
)
from .formats import load_sequence, quantize, read_flo, read_pgm, write_flo, write_pgm
from .object_tracker import FeatureExtractorSpec, ObjectConfig, track_sequence
from .point_tracker import PointTracker, PyramidConfig, select_points
from .synth import MOTIONS, TEXTURES, SyntheticSpec, generate_synthetic

log = logging.getLogger("contconv")

SPEC_FILE = "spec.json"


# -- argument plumbing --------------------------------------------------------


def _add_synth_args(p):
    g = p.add_argument_group("synthetic sequence")
    g.add_argument("--shape", type=int, nargs=2, default=[256, 256], metavar=("H", "W"))
    g.add_argument("--num-frames", dest="frames", type=int, default=20)
    g.add_argument("--texture", choices=TEXTURES, default="noise")
    g.add_argument("--motion", choices=MOTIONS, default="translation")
    g.add_argument("--velocity", type=float, nargs=2, default=[0.3, 0.7], metavar=("VX", "VY"))
    g.add_argument("--amplitude", type=float, nargs=2, default=[3.0, 2.0])
    g.add_argument("--period", type=float, default=20.0)
    g.add_argument("--rotation-deg", type=float, default=0.0)
    g.add_argument("--scale-rate", type=float, default=0.0)
    g.add_argument("--noise-snr-db", type=float, default=None)
    g.add_argument("--seed", type=int, default=0)


def _add_pyramid_args(p):
    d = PyramidConfig()
    g = p.add_argument_group("point tracker")
    g.add_argument("--levels", type=int, default=d.levels)
    g.add_argument("--window", type=int, default=d.window)
    g.add_argument("--learning-rate", type=float, default=d.learning_rate)
    g.add_argument("--beta", type=float, default=d.beta)
    g.add_argument("--newton-iters", type=int, default=d.newton_iters)
    g.add_argument("--sigma-px", type=float, default=d.sigma_px)
    g.add_argument("--lost-ratio", type=float, default=d.lost_ratio)
    g.add_argument("--refine-passes", type=int, default=d.refine_passes)
    g.add_argument("--mode", choices=("continuous", "mosse"), default=d.mode)


def _add_object_args(p):
    d = ObjectConfig()
    g = p.add_argument_group("object tracker")
    g.add_argument("--recipe", default="gray:1,gray:2,grad:4", help="comma-separated kind:factor channels")
    g.add_argument("--patch", type=int, default=d.features.patch)
    g.add_argument("--scales", type=int, default=d.scales)
    g.add_argument("--scale-step", type=float, default=d.scale_step)
    g.add_argument("--learning-rate", type=float, default=d.learning_rate)
    g.add_argument("--capacity", type=int, default=d.capacity)
    g.add_argument("--init-iters", type=int, default=d.init_iters)
    g.add_argument("--cg-iters", type=int, default=d.cg_iters)
    g.add_argument("--newton-iters", type=int, default=d.newton_iters)


def build_parser():
    parser = argparse.ArgumentParser(prog="contconv", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic sequence with ground truth")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    _add_synth_args(p)

    p = sub.add_parser("track-points", help="track feature points through a PGM sequence")
    p.add_argument("--config")
    p.add_argument("--frames", required=True, help="directory of .pgm frames")
    p.add_argument("--points", help="JSON list of [x, y] seeds (default: detect corners)")
    p.add_argument("--max-points", type=int, default=300)
    p.add_argument("--min-distance", type=float, default=None)
    p.add_argument("--out", required=True)
    _add_pyramid_args(p)

    p = sub.add_parser("track-object", help="track one target box through a PGM sequence")
    p.add_argument("--config")
    p.add_argument("--frames", required=True)
    p.add_argument("--box", type=float, nargs=4, required=True, metavar=("X", "Y", "W", "H"))
    p.add_argument("--out", required=True)
    _add_object_args(p)

    p = sub.add_parser("score", help="score tracks against ground truth")
    p.add_argument("--config")
    p.add_argument("--tracks", required=True, help="tracks.json from track-points")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--gt", help="ground-truth tracks JSON")
    src.add_argument("--gt-flows", help="directory with flow_*.flo (and optional occ_*.pgm)")
    p.add_argument("--skip-first", action="store_true", help="do not score the seed frame")
    p.add_argument("--out", required=True)

    p = sub.add_parser("selftest", help="throughput benchmark and ground-truth self-checks")
    p.add_argument("--config")
    p.add_argument("--points", type=int, default=300)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--num-frames", dest="frames", type=int, default=31)
    p.add_argument("--min-fps", type=float, default=30.0)
    p.add_argument("--cpu", type=int, default=None, help="pin to this CPU (default: the first allowed one)")
    p.add_argument("--json", action="store_true", help="print the result as JSON")
    _add_pyramid_args(p)
    p.set_defaults(levels=1)
    return parser, sub


def parse_args(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in sub.choices), None)
    if known.config and command is not None:
        cfg = json.loads(Path(known.config).read_text())
        if not isinstance(cfg, dict):
            parser.error(f"{known.config}: config must be a JSON object")
        sp = sub.choices[command]
        actions = {a.dest: a for a in sp._actions}
        unknown = sorted(set(cfg) - set(actions))
        if unknown:
            parser.error(f"{known.config}: unknown keys {unknown}")
        for key in cfg:
            actions[key].required = False  # supplied by the file
        sp.set_defaults(**cfg)
    return parser.parse_args(argv)


# -- helpers ------------------------------------------------------------------


def synth_spec(args) -> SyntheticSpec:
    return SyntheticSpec(
        shape=tuple(args.shape), frames=args.frames, texture=args.texture, motion=args.motion,
        velocity=tuple(args.velocity), amplitude=tuple(args.amplitude), period=args.period,
        rotation_deg=args.rotation_deg, scale_rate=args.scale_rate,
        noise_snr_db=args.noise_snr_db, seed=args.seed,
    )


def pyramid_config(args) -> PyramidConfig:
    return PyramidConfig(
        levels=args.levels, window=args.window, learning_rate=args.learning_rate, beta=args.beta,
        newton_iters=args.newton_iters, sigma_px=args.sigma_px, lost_ratio=args.lost_ratio,
        refine_passes=args.refine_passes, mode=args.mode,
    )


def object_config(args) -> ObjectConfig:
    chans = []
    for item in args.recipe.split(","):
        kind, _, factor = item.partition(":")
        chans.append((kind.strip(), int(factor or 1)))
    return ObjectConfig(
        features=FeatureExtractorSpec(tuple(chans), args.patch), scales=args.scales,
        scale_step=args.scale_step, learning_rate=args.learning_rate, capacity=args.capacity,
        init_iters=args.init_iters, cg_iters=args.cg_iters, newton_iters=args.newton_iters,
    )


def tracks_to_json(tracks):
    return [[None if np.isnan(p).any() else [float(p[0]), float(p[1])] for p in frame] for frame in tracks]


def tracks_from_json(data):
    F = len(data)
    n = len(data[0]) if F else 0
    out = np.full((F, n, 2), np.nan)
    for f, frame in enumerate(data):
        for i, p in enumerate(frame):
            if p is not None:
                out[f, i] = p
    return out


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n")


def load_spec(directory):
    path = Path(directory) / SPEC_FILE
    if not path.exists():
        return None
    d = json.loads(path.read_text())
    for key in ("shape", "velocity", "amplitude"):
        d[key] = tuple(d[key])
    return SyntheticSpec(**d)


def gt_from_flows(directory, seeds):
    d = Path(directory)
    flows = [read_flo(f) for f in sorted(d.glob("flow_*.flo"))]
    if not flows:
        raise FileNotFoundError(f"{d}: no flow_*.flo files")
    occ_files = sorted(d.glob("occ_*.pgm"))
    occ = [read_pgm(f, normalize=False) > 0 for f in occ_files] if occ_files else None
    return integrate_gt_tracks(flows, occ, seeds)


def analytic_tracks(spec, seeds):
    from .synth import SyntheticSequence

    return SyntheticSequence(spec, np.empty((0,)), np.empty((0,))).tracks(seeds)


def write_report(out, tracks, gt, config, skip_first=False):
    if skip_first:
        tracks, gt = tracks[1:], gt[1:]
    rep = score(tracks, gt)
    (out / "report.json").write_text(report_json(rep, config))
    write_precision_csv(rep, out / "precision.csv")
    write_histogram_csv(rep, out / "histogram.csv")
    return rep


# -- subcommands --------------------------------------------------------------


def cmd_synth(args):
    spec = synth_spec(args)
    seq = generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for f, frame in enumerate(seq.frames):
        write_pgm(out / f"frame_{f:04d}.pgm", quantize(frame), maxval=65535)
    for f in range(spec.frames - 1):
        write_flo(out / f"flow_{f:04d}.flo", seq.flow(f))
    write_json(out / SPEC_FILE, spec.to_dict())
    print(f"wrote {spec.frames} frames to {out}")
    return 0


def cmd_track_points(args):
    frames = load_sequence(args.frames)
    cfg = pyramid_config(args)
    if args.points:
        seeds = np.asarray(json.loads(Path(args.points).read_text()), float).reshape(-1, 2)
    else:
        seeds = select_points(frames[0], args.max_points, cfg.window, min_distance=args.min_distance)
    t0 = time.perf_counter()
    tracks, ok = PointTracker(cfg).run(frames, seeds)
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "tracks.json", {"tracks": tracks_to_json(tracks), "config": asdict(cfg)})
    print(f"tracked {len(seeds)} points over {len(frames)} frames, {int(ok.sum())} still tracked, "
          f"{(len(frames) - 1) / max(elapsed, 1e-9):.1f} frames/s")
    spec = load_spec(args.frames)
    gt = None
    if spec is not None:
        gt = analytic_tracks(spec, seeds)
    elif any(Path(args.frames).glob("flow_*.flo")):
        gt = gt_from_flows(args.frames, seeds)
    if gt is not None:
        rep = write_report(out, tracks, gt, asdict(cfg), skip_first=True)
        print(f"mean inlier EPE {rep.mean_inlier_epe:.4f} px, inlier ratio {rep.inlier_ratio:.4f}")
    return 0


def cmd_track_object(args):
    frames = load_sequence(args.frames)
    cfg = object_config(args)
    centers, sizes, idx = track_sequence(frames, args.box, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    body = {
        "centers": centers.tolist(),
        "sizes": sizes.tolist(),
        "scale_index": idx.tolist(),
        "config": {"box": list(args.box), "recipe": [list(c) for c in cfg.features.channels]},
    }
    spec = load_spec(args.frames)
    if spec is not None:
        x, y, w, h = args.box
        gt = analytic_tracks(spec, [[x + w / 2, y + h / 2]])[:, 0]
        err = np.linalg.norm(centers - gt, axis=1)
        body["center_error"] = err.tolist()
        body["mean_center_error"] = float(err[1:].mean()) if len(err) > 1 else 0.0
        print(f"mean center error {body['mean_center_error']:.4f} px")
    write_json(out / "object.json", body)
    return 0


def cmd_score(args):
    tracks = tracks_from_json(json.loads(Path(args.tracks).read_text())["tracks"])
    seeds = tracks[0]
    if args.gt:
        gt = tracks_from_json(json.loads(Path(args.gt).read_text())["tracks"])
    else:
        gt = gt_from_flows(args.gt_flows, seeds)
        F = min(len(gt), len(tracks))
        tracks, gt = tracks[:F], gt[:F]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = write_report(out, tracks, gt, {"tracks": str(args.tracks)}, skip_first=args.skip_first)
    print(f"mean inlier EPE {rep.mean_inlier_epe:.4f} px, inlier ratio {rep.inlier_ratio:.4f}")
    return 0


def _pin_cpu(cpu):
    if not hasattr(os, "sched_setaffinity"):
        return None
    allowed = sorted(os.sched_getaffinity(0))
    cpu = allowed[0] if cpu is None else cpu
    os.sched_setaffinity(0, {cpu})
    return cpu


def selftest(points=300, size=256, frames=31, config: PyramidConfig | None = None, cpu=None, pin=True):
    """Throughput of single-scale point tracking plus ground-truth self-checks.

    With ``pin`` the process is restricted to one CPU for the rest of its life.
    """
    cfg = config or PyramidConfig(levels=1)
    pinned = _pin_cpu(cpu) if pin else None
    spec = SyntheticSpec(shape=(size, size), frames=frames, velocity=(0.4, 0.25), seed=2)
    seq = generate_synthetic(spec)
    seeds = select_points(seq.frames[0], points, cfg.window, min_distance=8)
    tr = PointTracker(cfg)
    tr.init(seq.frames[0], seeds)
    t0 = time.perf_counter()
    for f in seq.frames[1:]:
        tr.step(f)
    elapsed = time.perf_counter() - t0
    fps = (frames - 1) / elapsed
    gt = seq.tracks(seeds)
    final = np.where(tr.tracked[:, None], tr.positions, np.nan)
    rep = score(final[None], gt[-1:])

    # integrating the generator's own analytic flow must reproduce its tracks
    aff = SyntheticSpec(shape=(96, 96), frames=8, motion="affine", rotation_deg=1.0, scale_rate=0.01, velocity=(0.3, -0.2))
    aseq = generate_synthetic(aff)
    aseeds = np.array([[30.0, 40.0], [50.5, 47.25], [60.0, 20.0]])
    integ = integrate_gt_tracks([aseq.flow(f) for f in range(aff.frames - 1)], None, aseeds)
    flow_err = float(np.nanmax(np.abs(integ - aseq.tracks(aseeds))))
    return {
        "backend": kernels.BACKEND,
        "cpu": pinned,
        "points": int(len(seeds)),
        "frame_size": size,
        "frames": frames - 1,
        "seconds": elapsed,
        "fps": fps,
        "final_inlier_ratio": rep.inlier_ratio,
        "final_mean_inlier_epe": rep.mean_inlier_epe,
        "flow_integration_max_error": flow_err,
    }


def cmd_selftest(args):
    res = selftest(args.points, args.size, args.frames, pyramid_config(args), args.cpu)
    ok = res["fps"] >= args.min_fps and res["flow_integration_max_error"] <= 1e-9
    res["pass"] = bool(ok)
    if args.json:
        print(json.dumps(res, sort_keys=True, indent=2))
    else:
        print(f"backend {res['backend']}, cpu {res['cpu']}: {res['points']} points at {res['frame_size']}^2, "
              f"{res['fps']:.1f} frames/s (need {args.min_fps:g})")
        print(f"final frame inlier ratio {res['final_inlier_ratio']:.3f}, "
              f"mean inlier EPE {res['final_mean_inlier_epe']:.4f} px")
        print(f"flow integration vs analytic tracks: max error {res['flow_integration_max_error']:.2e} px")
        print("PASS" if ok else "FAIL")
    return 0 if ok else 1


COMMANDS = {
    "synth": cmd_synth,
    "track-points": cmd_track_points,
    "track-object": cmd_track_object,
    "score": cmd_score,
    "selftest": cmd_selftest,
}


def main(argv=None):
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
