import math

import pytest
from hypothesis import given, strategies as st

from fpvls.segmenter import broadcast_schedule, segmentize, simulate_continuity

from conftest import face, make_stream


def test_segmentize_covers_stream_in_order():
    s = make_stream(7)
    segs = segmentize(s, 3, {4: [face(4)]})
    assert [len(g.frames) for g in segs] == [3, 3, 1]
    assert [g.index for g in segs] == [0, 1, 2]
    assert segs[1].faces == {4: [segs[1].faces[4][0]]}
    assert [fr.index for g in segs for fr in g.frames] == list(range(7))


def test_segmentize_rejects_zero_length():
    with pytest.raises(ValueError):
        segmentize(make_stream(2), 0)


def test_schedule_first_frame():
    e = broadcast_schedule(0, 150, 30)
    assert e.broadcast_frame_number == 300
    assert e.record_complete_time == pytest.approx(5.0)
    assert e.process_deadline == pytest.approx(10.0)
    assert e.broadcast_time == pytest.approx(10.0)


def test_schedule_last_frame_of_segment():
    e = broadcast_schedule(149, 150, 30)
    assert e.record_complete_time == pytest.approx(5.0)
    assert broadcast_schedule(150, 150, 30).record_complete_time == pytest.approx(10.0)


@given(st.integers(0, 10_000), st.integers(1, 300), st.integers(1, 120))
def test_lag_is_two_segments_and_deadline_precedes_broadcast(f, n, fps):
    e = broadcast_schedule(f, n, fps)
    assert e.broadcast_frame_number - f == 2 * n
    assert e.process_deadline <= e.broadcast_time + 1e-9


def test_continuity_at_budget_and_stall_above():
    assert simulate_continuity(300, 30, 30, 1.0).continuous
    v = simulate_continuity(300, 30, 30, 1.01)
    assert not v.continuous and v.label == "stall"
    assert v.first_stall_segment is not None and v.late_by > 0


def test_continuity_single_slow_segment():
    costs = [0.5] * 10
    costs[3] = 2.5
    v = simulate_continuity(300, 30, 30, costs)
    assert not v.continuous and v.first_stall_segment == 3 and v.stall_frame == 90


def test_continuity_needs_enough_costs():
    with pytest.raises(ValueError):
        simulate_continuity(100, 30, 30, [0.1, 0.1])
