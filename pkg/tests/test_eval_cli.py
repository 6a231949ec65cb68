import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from contconv import cli
from contconv.evaluate import (
    INLIER_EPE,
    PRECISION_THRESHOLDS,
    bilinear,
    integrate_gt_tracks,
    report_json,
    score,
    track_lengths,
)
from contconv.formats import (
    FloDimensionError,
    FloMagicError,
    FloTruncatedError,
    PGMError,
    read_flo,
    read_pgm,
    write_flo,
    write_pgm,
)
from contconv.synth import SyntheticSpec, generate_synthetic


def flo_bytes(magic, w, h, data):
    return struct.pack("<f", magic) + struct.pack("<ii", w, h) + struct.pack(f"<{len(data)}f", *data)


# -- .flo ---------------------------------------------------------------------


def test_flo_reads_format_example(tmp_path):
    p = tmp_path / "a.flo"
    p.write_bytes(flo_bytes(202021.25, 2, 1, [1, 0, 0, 1]))
    flow = read_flo(p)
    assert flow.shape == (1, 2, 2)
    assert flow[0].tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_flo_bad_magic(tmp_path):
    p = tmp_path / "a.flo"
    p.write_bytes(flo_bytes(202021.26, 2, 1, [1, 0, 0, 1]))
    with pytest.raises(FloMagicError):
        read_flo(p)


def test_flo_truncated_names_byte_counts(tmp_path):
    p = tmp_path / "a.flo"
    p.write_bytes(flo_bytes(202021.25, 2, 2, [1, 0, 0, 1, 5]))
    with pytest.raises(FloTruncatedError) as exc:
        read_flo(p)
    assert exc.value.expected == 12 + 32 and exc.value.actual == 12 + 20
    assert "44" in str(exc.value) and "32" in str(exc.value)


@pytest.mark.parametrize("w,h", [(0, 3), (3, -1)])
def test_flo_nonpositive_dimensions(tmp_path, w, h):
    p = tmp_path / "a.flo"
    p.write_bytes(flo_bytes(202021.25, w, h, []))
    with pytest.raises(FloDimensionError):
        read_flo(p)


def test_flo_errors_are_distinct():
    kinds = {FloMagicError, FloTruncatedError, FloDimensionError}
    assert len(kinds) == 3
    assert not any(issubclass(a, b) for a in kinds for b in kinds if a is not b)


@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_flo_roundtrip(tmp_path_factory, h, w, seed):
    flow = np.random.default_rng(seed).normal(scale=20, size=(h, w, 2)).astype(np.float32)
    p = tmp_path_factory.mktemp("flo") / "x.flo"
    write_flo(p, flow)
    assert p.stat().st_size == 12 + 8 * h * w
    assert np.array_equal(read_flo(p), flow)


# -- PGM ----------------------------------------------------------------------


@pytest.mark.parametrize("maxval", [255, 1023, 65535])
def test_pgm_roundtrip(tmp_path, maxval):
    img = np.random.default_rng(0).integers(0, maxval + 1, (5, 7))
    write_pgm(tmp_path / "a.pgm", img, maxval)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm", normalize=False), img)
    assert np.allclose(read_pgm(tmp_path / "a.pgm"), img * 255.0 / maxval)


def test_pgm_16bit_is_big_endian_with_comments(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n# comment\n2 1\n# another\n65535\n" + bytes([0x01, 0x02, 0xFF, 0x00]))
    assert read_pgm(p, normalize=False).tolist() == [[0x0102, 0xFF00]]


@pytest.mark.parametrize(
    "data",
    [b"P2\n1 1\n255\n\x00", b"P5\n2 2\n255\n\x00", b"P5\n0 2\n255\n", b"P5\n1 1\n70000\n\x00\x00", b"P5\n1"],
)
def test_pgm_errors(tmp_path, data):
    p = tmp_path / "a.pgm"
    p.write_bytes(data)
    with pytest.raises(PGMError):
        read_pgm(p)


# -- ground-truth integration -------------------------------------------------


def test_uniform_flow_integration():
    flows = [np.tile([1.0, 0.0], (10, 10, 1))] * 3
    tr = integrate_gt_tracks(flows, None, [[5.0, 5.0]])
    assert tr[1:, 0].tolist() == [[6.0, 5.0], [7.0, 5.0], [8.0, 5.0]]


def test_bilinear_cell_center():
    field = np.zeros((2, 2, 1))
    field[1, 1, 0] = 4.0
    assert bilinear(field, np.array([0.5]), np.array([0.5]))[0, 0] == pytest.approx(1.0)


def test_occlusion_terminates_track():
    flows = [np.tile([1.0, 0.0], (10, 10, 1))] * 4
    occ = [np.zeros((10, 10), bool) for _ in range(5)]
    occ[2][5, 7] = True  # the track reaches (7, 5) at frame 2
    tr = integrate_gt_tracks(flows, occ, [[5.0, 5.0], [5.0, 2.0]])
    assert track_lengths(tr).tolist() == [2, 5]
    assert np.isnan(tr[2:, 0]).all()


def test_track_leaving_frame_terminates():
    flows = [np.tile([2.0, 0.0], (10, 10, 1))] * 5
    tr = integrate_gt_tracks(flows, None, [[4.0, 3.0]])
    assert track_lengths(tr).tolist() == [3]  # x = 4, 6, 8, then 10 is outside


@pytest.mark.parametrize(
    "kw",
    [
        dict(motion="affine", rotation_deg=1.0, scale_rate=0.01, velocity=(0.3, -0.2)),
        dict(motion="translation", velocity=(0.3, 0.7)),
        dict(motion="sinusoid", amplitude=(3.0, 2.0), period=7.0),
    ],
)
def test_integrating_generator_flow_reproduces_tracks(kw):
    spec = SyntheticSpec(shape=(64, 64), frames=10, **kw)
    seq = generate_synthetic(spec)
    seeds = np.array([[20.0, 30.0], [33.3, 31.7], [45.0, 12.5]])
    tr = integrate_gt_tracks([seq.flow(f) for f in range(spec.frames - 1)], None, seeds)
    assert np.nanmax(np.abs(tr - seq.tracks(seeds))) <= 1e-9


# -- synthetic generator ------------------------------------------------------


def test_zero_motion_frames_identical():
    seq = generate_synthetic(SyntheticSpec(shape=(32, 40), frames=4))
    assert all(np.array_equal(f, seq.frames[0]) for f in seq.frames)
    tr = seq.tracks([[3.0, 4.0]])
    assert np.all(tr == [3.0, 4.0])


def test_translation_track_displacement():
    seq = generate_synthetic(SyntheticSpec(shape=(16, 16), frames=21, velocity=(0.3, 0.7)))
    d = seq.tracks([[5.0, 5.0]])[-1, 0] - [5.0, 5.0]
    assert np.allclose(d, [6.0, 14.0], atol=1e-12)


def test_rotation_speed_scales_with_radius():
    spec = SyntheticSpec(shape=(101, 101), frames=3, motion="affine", rotation_deg=1.0)
    seq = generate_synthetic(spec)
    r = 40.0
    tr = seq.tracks([[50.0 + r, 50.0]])
    step = np.linalg.norm(tr[1, 0] - tr[0, 0])
    assert step == pytest.approx(0.0175 * r, rel=3e-3)


def test_frames_render_the_warped_texture():
    # an unwarped sample point reappears at its tracked position
    spec = SyntheticSpec(shape=(64, 64), frames=3, velocity=(2.0, 1.0))
    seq = generate_synthetic(spec)
    assert np.allclose(seq.frames[2][12:, 4:], seq.frames[0][10:-2, :-4], atol=1e-9)


@pytest.mark.parametrize("texture", ["noise", "checkerboard", "blobs"])
def test_textures_span_intensity_range(texture):
    f = generate_synthetic(SyntheticSpec(shape=(64, 64), frames=1, texture=texture)).frames[0]
    assert f.min() == pytest.approx(28.0) and f.max() == pytest.approx(228.0)


def test_noise_level_matches_snr():
    spec = SyntheticSpec(shape=(128, 128), frames=2, noise_snr_db=20.0)
    seq = generate_synthetic(spec)
    ratio = seq.clean.std() / (seq.frames - seq.clean).std()
    assert 20 * np.log10(ratio) == pytest.approx(20.0, abs=0.2)


# -- scoring ------------------------------------------------------------------


def test_perfect_tracks():
    gt = np.random.default_rng(0).uniform(0, 50, (5, 4, 2))
    rep = score(gt, gt)
    assert rep.mean_inlier_epe == 0 and rep.inlier_ratio == 1
    assert np.all(rep.precision[PRECISION_THRESHOLDS > 0] == 1)


def test_three_four_five():
    rep = score([[[3.0, 4.0]]], [[[0.0, 0.0]]])
    assert rep.epe[0, 0] == 5.0
    assert rep.inlier_ratio == 0.0


def test_lost_points_are_outliers():
    gt = np.zeros((2, 2, 2))
    tr = gt.copy()
    tr[1, 1] = np.nan
    rep = score(tr, gt)
    assert rep.inlier_ratio == 0.75
    assert np.isinf(rep.epe[1, 1])


def recompute(tracks, gt):
    """Row-by-row recomputation of the aggregates, spreadsheet style."""
    errors = []
    for f in range(len(gt)):
        for i in range(len(gt[f])):
            g = gt[f][i]
            if g is None:
                continue
            t = tracks[f][i]
            errors.append(float("inf") if t is None else ((t[0] - g[0]) ** 2 + (t[1] - g[1]) ** 2) ** 0.5)
    inl = [e for e in errors if e < 3.0]
    prec = [sum(e < th for e in errors) / len(errors) for th in PRECISION_THRESHOLDS]
    return sum(inl) / len(inl), len(inl) / len(errors), prec


def test_mixed_corpus_matches_recomputation():
    rng = np.random.default_rng(7)
    F, n = 6, 10
    gt = rng.uniform(0, 100, (F, n, 2))
    noise = rng.normal(size=(F, n, 2)) * rng.choice([0.2, 1.0, 4.0], size=(n, 1))
    tr = gt + noise
    gt[4:, 2] = np.nan  # ground truth ends
    tr[3:, 5] = np.nan  # tracker loses the point
    lists = lambda a: [[None if np.isnan(p).any() else list(p) for p in row] for row in a]
    mean_inl, ratio, prec = recompute(lists(tr), lists(gt))
    rep = score(tr, gt)
    assert rep.mean_inlier_epe == pytest.approx(mean_inl, rel=1e-12)
    assert rep.inlier_ratio == pytest.approx(ratio, rel=1e-12)
    assert np.allclose(rep.precision, prec, rtol=0, atol=1e-15)


@given(st.integers(0, 2**31 - 1), st.integers(1, 6), st.integers(1, 6))
@settings(max_examples=40, deadline=None)
def test_precision_curve_properties(seed, F, n):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0, 20, (F, n, 2))
    tr = gt + rng.normal(scale=rng.uniform(0.1, 5), size=gt.shape)
    if rng.uniform() < 0.5:
        tr[0, 0] = gt[0, 0]
    rep = score(tr, gt)
    assert np.all(np.diff(rep.precision) >= 0)
    assert rep.precision[0] == 0  # strict inequality, so even exact matches do not count at 0
    assert rep.precision_at(INLIER_EPE) == rep.inlier_ratio


def test_report_json_is_deterministic():
    rng = np.random.default_rng(3)
    gt = rng.uniform(0, 9, (4, 3, 2))
    tr = gt + rng.normal(size=gt.shape)
    tr[2, 1] = np.nan
    a = report_json(score(tr, gt), {"k": 1})
    b = report_json(score(tr.copy(), gt.copy()), {"k": 1})
    assert a == b
    body = json.loads(a)
    assert body["metrics"]["inlier_ratio"] == score(tr, gt).inlier_ratio
    assert len(body["metrics"]["precision"]) == 64


# -- command line -------------------------------------------------------------


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"levels": 2, "learning_rate": 0.3, "out": "x"}))
    args = cli.parse_args(["track-points", "--config", str(cfg), "--frames", "d", "--levels", "1"])
    assert args.levels == 1 and args.learning_rate == 0.3 and args.out == "x"


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"levelz": 2}))
    with pytest.raises(SystemExit):
        cli.parse_args(["track-points", "--config", str(cfg), "--frames", "d", "--out", "o"])


def test_cli_end_to_end(tmp_path, capsys):
    seq, run = tmp_path / "seq", tmp_path / "run"
    assert cli.main(["synth", "--out", str(seq), "--shape", "96", "96", "--num-frames", "4"]) == 0
    assert len(list(seq.glob("frame_*.pgm"))) == 4 and len(list(seq.glob("flow_*.flo"))) == 3
    assert cli.main(["track-points", "--frames", str(seq), "--out", str(run), "--max-points", "8", "--levels", "2"]) == 0
    report = json.loads((run / "report.json").read_text())
    assert report["metrics"]["inlier_ratio"] == 1.0
    assert (run / "precision.csv").read_text().startswith("threshold,precision\n")
    assert (run / "histogram.csv").read_text().startswith("bin_left,bin_right,count\n")
    assert cli.main(["score", "--tracks", str(run / "tracks.json"), "--gt-flows", str(seq), "--out", str(tmp_path / "s"), "--skip-first"]) == 0
    again = json.loads((tmp_path / "s" / "report.json").read_text())
    assert again["metrics"]["inlier_ratio"] == 1.0
    assert abs(again["metrics"]["mean_inlier_epe"] - report["metrics"]["mean_inlier_epe"]) < 1e-4
    assert cli.main(["track-object", "--frames", str(seq), "--box", "32", "32", "32", "32", "--out", str(run), "--scales", "3"]) == 0
    obj = json.loads((run / "object.json").read_text())
    assert obj["mean_center_error"] < 0.5
    capsys.readouterr()


def test_selftest_reports(capsys):
    res = cli.selftest(points=20, size=96, frames=4, pin=False)
    assert res["points"] == 20 and res["fps"] > 0
    assert res["flow_integration_max_error"] <= 1e-9
    assert res["final_inlier_ratio"] == 1.0
