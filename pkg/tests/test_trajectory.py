import pytest
from hypothesis import given, strategies as st

from fpvls.model import BBox, Entry, Status, Trajectory
from fpvls.trajectory import (ClusteringError, build_raw, gap_count, gap_regions,
                              interpolate_breaks, mark_gaps, missing_runs)

from conftest import face


def traj(frames, pid=1):
    return Trajectory(pid, entries={f: Entry(BBox(f * 2.0, 0, 10, 10), Status.DETECTED)
                                    for f in frames})


def test_build_raw_links_by_label():
    vecs = [face(0), face(1), face(1, x=30)]
    out = build_raw([0, 0, 1], vecs)
    assert sorted(out) == [0, 1]
    assert out[0].frames_with(Status.DETECTED) == [0, 1]


def test_build_raw_same_frame_collision_is_error():
    with pytest.raises(ClusteringError):
        build_raw([0, 0], [face(3), face(3, x=20)])


def test_build_raw_withholds_thin_new_identities():
    out = build_raw([0, 0, 0, 1], [face(0), face(1), face(2), face(2, x=40)], min_support=3)
    assert sorted(out) == [0]
    # an identity that already has a trajectory is extended even with one vector
    out = build_raw([0], [face(9)], out, min_support=3)
    assert 9 in out[0].entries


def test_interpolate_fills_short_break_linearly():
    t = interpolate_breaks(traj([0, 4]), max_break=5)
    assert t.frames_with(Status.INTERPOLATED) == [1, 2, 3]
    assert t.entries[2].bbox.x == pytest.approx(4.0)


def test_interpolate_leaves_long_break_and_never_extrapolates():
    t = interpolate_breaks(traj([0, 10]), max_break=5)
    assert t.frames_with(Status.INTERPOLATED) == []
    t = interpolate_breaks(traj([3, 4]), max_break=5)
    assert t.known_frames() == [3, 4]


def test_interpolate_respects_writable_frames():
    t = interpolate_breaks(traj([0, 4]), 5, frames=[3, 4])
    assert t.frames_with(Status.INTERPOLATED) == [3]


def test_interpolate_does_not_mutate_input():
    t = traj([0, 3])
    interpolate_breaks(t, 5)
    assert t.known_frames() == [0, 3]


@given(st.lists(st.integers(0, 60), min_size=2, max_size=12, unique=True), st.integers(0, 8))
def test_interpolation_runs_bounded(frames, max_break):
    t = interpolate_breaks(traj(frames), max_break)
    known = traj(frames).known_frames()
    for f in t.frames_with(Status.INTERPOLATED):
        left = max(k for k in known if k < f)
        right = min(k for k in known if k > f)
        assert right - left - 1 <= max_break


def test_missing_runs():
    assert missing_runs(traj([2, 3, 7]), 0, 10) == [(0, 2), (4, 7), (8, 10)]


def test_gap_region_union_of_flanks_dilated():
    t = traj([0, 10])
    regions = gap_regions(t, range(0, 11), gamma=1.5)
    assert set(regions) == set(range(1, 10))
    r = regions[5]
    union = BBox(0, 0, 30, 10)
    assert r.center == pytest.approx(union.center)
    assert (r.w, r.h) == pytest.approx((45, 15))


def test_gap_region_one_flank_and_none():
    regions = gap_regions(traj([0]), range(0, 4))
    assert set(regions) == {1, 2, 3}
    assert gap_regions(Trajectory(1), range(5)) == {}


def test_gap_region_lookback():
    assert gap_regions(traj([0]), range(20, 25), lookback=5) == {}


def test_mark_gaps_inside_span_only():
    t = traj([2, 6])
    n = mark_gaps(t, range(0, 10))
    assert n == 3
    assert t.frames_with(Status.GAP) == [3, 4, 5]
    assert gap_count([t]) == 3
