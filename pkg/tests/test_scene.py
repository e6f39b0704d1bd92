import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cognitraj.scene import (
    CSVParseError,
    MissingFrameError,
    MissingSpec,
    SceneWindow,
    Track,
    TrackError,
    apply_missing,
    finite_difference,
    ingest_csv,
    interpolate_gaps,
    load_windows,
    make_windows,
    save_windows,
    subsample_training,
)


def affine_track(agent_id, n, dt=0.1, p0=(0.0, 0.0), v=(10.0, 0.5), first=0):
    t = np.arange(n) * dt
    p = np.column_stack([p0[0] + v[0] * t, p0[1] + v[1] * t])
    return Track(agent_id, np.arange(first, first + n), p, np.tile(v, (n, 1)), np.zeros((n, 2)), dt)


def write(tmp_path, text, name="tracks.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


# ---------------------------------------------------------------- ingest


def test_three_row_file_derives_central_velocity(tmp_path):
    path = write(tmp_path, "agent_id,frame,x,y\n1,0,0,0\n1,1,1,0\n1,2,2,0\n")
    (track,) = ingest_csv(path, dt=0.1)
    assert track.agent_id == 1 and len(track) == 3
    # (2 - 0) / (2 * 0.1)
    assert track.v[1, 0] == pytest.approx(10.0, abs=1e-12)
    assert track.v[0, 0] == pytest.approx(10.0) and track.v[2, 0] == pytest.approx(10.0)
    np.testing.assert_allclose(track.a, 0.0, atol=1e-9)


def test_empty_file_gives_no_tracks(tmp_path):
    assert ingest_csv(write(tmp_path, ""), 0.1) == []
    assert ingest_csv(write(tmp_path, "agent_id,frame,x,y\n", "h.csv"), 0.1) == []


def test_duplicate_rows_rejected(tmp_path):
    path = write(tmp_path, "agent_id,frame,x,y\n1,5,0,0\n1,5,1,0\n")
    with pytest.raises(TrackError, match="duplicate"):
        ingest_csv(path, 0.1)


def test_malformed_row_reports_line_number(tmp_path):
    path = write(tmp_path, "agent_id,frame,x,y\n1,0,0,0\n1,1,abc,0\n")
    with pytest.raises(CSVParseError) as exc:
        ingest_csv(path, 0.1)
    assert exc.value.line == 3


def test_non_constant_frame_step_rejected(tmp_path):
    path = write(tmp_path, "agent_id,frame,x,y\n1,0,0,0\n1,1,1,0\n1,3,3,0\n")
    with pytest.raises(TrackError, match="frame step"):
        ingest_csv(path, 0.1)


def test_explicit_kinematics_columns_used(tmp_path):
    path = write(tmp_path, "agent_id,frame,x,y,vx,vy,ax,ay\n2,0,0,0,5,1,0.5,0\n2,1,0.5,0.1,5,1,0.5,0\n")
    (track,) = ingest_csv(path, 0.1)
    np.testing.assert_array_equal(track.v, [[5, 1], [5, 1]])
    np.testing.assert_array_equal(track.a, [[0.5, 0], [0.5, 0]])


def test_finite_difference_endpoints():
    np.testing.assert_allclose(finite_difference(np.array([[0.0], [1.0], [4.0]]), 1.0), [[1.0], [2.0], [3.0]])


def test_ingest_is_row_order_invariant(tmp_path):
    rows = [f"{a},{f},{a * 3 + f * 0.7},{f * f * 0.01}" for a in (1, 2, 3) for f in range(12)]
    header = "agent_id,frame,x,y\n"
    base = ingest_csv(write(tmp_path, header + "\n".join(rows) + "\n", "a.csv"), 0.1)
    rng = random.Random(4)
    for k in range(3):
        shuffled = rows[:]
        rng.shuffle(shuffled)
        other = ingest_csv(write(tmp_path, header + "\n".join(shuffled) + "\n", f"s{k}.csv"), 0.1)
        assert [t.agent_id for t in other] == [t.agent_id for t in base]
        for x, y in zip(base, other):
            np.testing.assert_array_equal(x.p, y.p)
            np.testing.assert_array_equal(x.v, y.v)
            np.testing.assert_array_equal(x.a, y.a)


# ---------------------------------------------------------------- windows


def test_eighty_frame_track_gives_one_window():
    (w,) = make_windows([affine_track(1, 80)], 3.0, 5.0)
    assert w.t_h_frames == 30 and w.t_f_frames == 50
    assert len(w.history(w.target)) == 30 and len(w.future(w.target)) == 50


def test_seventy_nine_frames_gives_none_and_is_reported():
    from cognitraj.scene import WindowReport

    report = WindowReport()
    assert make_windows([affine_track(1, 79)], 3.0, 5.0, report=report) == []
    assert report.skipped_short == [1]


def test_partially_present_neighbor_excluded():
    target = affine_track(1, 80)
    half = affine_track(2, 65, p0=(0, 3.5), first=15)  # joins halfway through the history
    full = affine_track(3, 40, p0=(0, -3.5))  # covers the history, not the future
    (w,) = make_windows([target, half, full], 3.0, 5.0, target_policy="first")
    ids = [tr.agent_id for tr in w.agents]
    assert ids == [1, 3]
    co_present = sum(1 for f in range(0, 30) if half.first_frame <= f <= half.last_frame)
    assert co_present == 15 < w.t_h_frames


def test_window_frame_count_matches_duration():
    tracks = [affine_track(i, 200 + 7 * i) for i in range(3)]
    for stride in (None, 10, 33):
        for w in make_windows(tracks, 3.0, 5.0, stride=stride):
            assert len(w.history(w.target)) + len(w.future(w.target)) == math.floor((3.0 + 5.0) / 0.1 + 1e-9)


def test_windows_jsonl_roundtrip(tmp_path):
    ws = make_windows([affine_track(1, 80), affine_track(2, 80, p0=(5, 3))], 3.0, 5.0)
    ws[0] = apply_missing(ws[0], MissingSpec.from_variant("drop5"))
    path = tmp_path / "w.jsonl"
    save_windows(ws, path)
    back = load_windows(path)
    assert len(back) == len(ws)
    for a, b in zip(ws, back):
        assert a.to_dict() == b.to_dict()


# ---------------------------------------------------------------- missing data


@pytest.fixture
def window():
    (w,) = make_windows([affine_track(1, 80), affine_track(2, 80, p0=(10, 3.5), v=(9, 0))], 3.0, 5.0, target_policy="first")
    return w


@pytest.mark.parametrize("variant, offsets, remaining", [
    ("drop3", {9, 10, 11}, 27),
    ("drop5", {8, 9, 10, 11, 12}, 25),
    ("drop8", set(range(7, 15)), 22),
])
def test_drop_variants(window, variant, offsets, remaining):
    gapped = apply_missing(window, MissingSpec.from_variant(variant))
    t = window.current_frame
    for tr in gapped.agents:
        hist = gapped.history(tr)
        missing = {int(t - f) for f, row in zip(hist.frames, hist.p) if np.isnan(row).any()}
        assert missing == offsets
        assert int(np.isfinite(hist.p).all(axis=1).sum()) == remaining
    assert gapped.present_history_frames() == remaining


def test_drop5_is_t_minus_12_to_t_minus_8(window):
    gapped = apply_missing(window, MissingSpec.from_variant("drop5"))
    t = window.current_frame
    hist = gapped.history(gapped.target)
    dropped = [int(f) for f, row in zip(hist.frames, hist.p) if np.isnan(row).any()]
    assert dropped == list(range(t - 12, t - 7))


def test_spec_outside_history_rejected(window):
    with pytest.raises(MissingFrameError):
        apply_missing(window, MissingSpec("custom", (29,)))
    with pytest.raises(MissingFrameError):
        apply_missing(window, MissingSpec("custom", (0,)))


def test_unknown_variant():
    with pytest.raises(ValueError, match="drop4"):
        MissingSpec.from_variant("drop4")


@pytest.mark.parametrize("variant", ["drop3", "drop5", "drop8"])
def test_interpolation_exact_on_affine(window, variant):
    repaired = interpolate_gaps(apply_missing(window, MissingSpec.from_variant(variant)))
    assert repaired.gaps == ()
    for a, b in zip(window.agents, repaired.agents):
        assert np.max(np.abs(a.p - b.p)) <= 1e-12
        np.testing.assert_array_equal(a.v, b.v)
        np.testing.assert_array_equal(a.a, b.a)


def test_midpoint_and_quadratic_cases():
    dt = 1.0
    frames = np.arange(30)
    # single missing frame between positions 0 and 1
    p = np.zeros((30, 2))
    p[:, 0] = np.clip(frames - 19, 0, 1)
    tr = Track(1, frames, p, np.zeros((30, 2)), np.zeros((30, 2)), dt)
    w = SceneWindow(0, [tr], 30, 0, dt, 0)
    fixed = interpolate_gaps(apply_missing(w, MissingSpec("one", (10,))))
    assert fixed.target.p[19, 0] == 0.5

    # p(t) = t^2 with frames 0 and 2 known, 1 dropped: interpolation gives 2, truth 1
    q = np.zeros((30, 2))
    q[:, 0] = (frames - 18.0) ** 2
    q[:18, 0] = 0
    tr = Track(1, frames, q, np.zeros((30, 2)), np.zeros((30, 2)), dt)
    w = SceneWindow(0, [tr], 30, 0, dt, 0)
    fixed = interpolate_gaps(apply_missing(w, MissingSpec("one", (10,))))
    assert fixed.target.p[19, 0] == 2.0
    assert abs(fixed.target.p[19, 0] - q[19, 0]) == 1.0


def test_gap_touching_boundary_rejected(window):
    tr = window.target.copy()
    tr.p[0] = np.nan
    bad = SceneWindow(0, [tr], window.t_h_frames, window.t_f_frames, window.dt, window.start_frame, gaps=(29,))
    with pytest.raises(MissingFrameError):
        interpolate_gaps(bad)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(-50, 50), st.floats(-50, 50), st.floats(-30, 30), st.floats(-30, 30),
    st.floats(-3, 3), st.floats(-3, 3), st.sampled_from(["drop3", "drop5", "drop8"]),
)
def test_affine_kinematics_survive_drop_and_repair(x0, y0, vx, vy, ax, ay, variant):
    n, dt = 80, 0.1
    t = np.arange(n) * dt
    # v and a both affine in time (a constant, v linear); p exactly quadratic is
    # not affine, so feed p affine too by construction
    p = np.column_stack([x0 + vx * t, y0 + vy * t])
    v = np.column_stack([vx + ax * t, vy + ay * t])
    a = np.tile([ax, ay], (n, 1))
    tr = Track(0, np.arange(n), p, v, a, dt)
    (w,) = make_windows([tr], 3.0, 5.0)
    back = interpolate_gaps(apply_missing(w, MissingSpec.from_variant(variant)))
    np.testing.assert_allclose(back.target.p, w.target.p, rtol=0, atol=1e-9)
    np.testing.assert_allclose(back.target.v, w.target.v, rtol=0, atol=1e-9)
    np.testing.assert_array_equal(back.target.a, w.target.a)


# ---------------------------------------------------------------- subsampling


def test_subsample_identity_and_size():
    ws = list(range(100))
    assert subsample_training(ws, 1.0, 3) == ws
    sub = subsample_training(ws, 0.25, 3)
    assert len(sub) == 25
    assert sub == subsample_training(ws, 0.25, 3)
    assert set(sub) != set(subsample_training(ws, 0.25, 4))
    assert len(subsample_training(list(range(10)), 0.25, 0)) == 2


def test_subsample_rejects_bad_fraction():
    for f in (0, -0.1, 1.5):
        with pytest.raises(ValueError):
            subsample_training([1, 2, 3], f, 0)
