import itertools

import numpy as np
import pytest

from fpvls.model import BBox, Entry, Status, Trajectory, iou_matrix
from fpvls.refiner import (CandidateTrajectory, associate_candidates, match_boxes,
                           nearest_detections, refine, refine_trajectory, test_candidate as run_test)

from conftest import cand


def det_traj(frames, feat=lambda f: np.zeros(32), pid=1):
    return Trajectory(pid, entries={f: Entry(BBox(f, 0, 10, 10), Status.DETECTED, feat(f))
                                    for f in frames})


def brute_force(prev, cur, floor):
    """Exhaustive maximum-overlap assignment, floor applied afterwards."""
    ov = iou_matrix(prev, cur)
    n, m = len(prev), len(cur)
    best, best_pairs = -1.0, []
    if n <= m:
        options = ([(i, p[i]) for i in range(n)] for p in itertools.permutations(range(m), n))
    else:
        options = ([(p[j], j) for j in range(m)] for p in itertools.permutations(range(n), m))
    for pairs in options:
        s = sum(ov[i, j] for i, j in pairs)
        if s > best + 1e-12:
            best, best_pairs = s, pairs
    return sorted((i, j) for i, j in best_pairs if ov[i, j] >= floor)


def test_match_boxes_agrees_with_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n, m = rng.integers(1, 5, 2)
        prev = [BBox(*rng.uniform(0, 30, 2), 10, 10) for _ in range(n)]
        cur = [BBox(*rng.uniform(0, 30, 2), 10, 10) for _ in range(m)]
        assert sorted(match_boxes(prev, cur, 0.1)) == brute_force(prev, cur, 0.1)


def test_associate_chains_consecutive_frames():
    per = {0: [cand(0, 0, 0), cand(0, 50, 50)], 1: [cand(1, 1, 0)], 2: [cand(2, 2, 0)],
           4: [cand(4, 3, 0)]}
    chains = associate_candidates(per, 0.1)
    assert [c.frames for c in chains] == [[0, 1, 2], [0], [4]]


def test_nearest_detections_by_time():
    t = det_traj([0, 1, 2, 9, 10, 30], feat=lambda f: np.full(32, float(f)))
    x = nearest_detections(t, [5, 6, 7], 3)
    assert x[:, 0].tolist() == [2.0, 9.0, 10.0]


def test_candidate_must_be_shorter():
    t = det_traj([0, 1])
    ct = CandidateTrajectory(1, [cand(f) for f in range(5, 8)])
    assert run_test(t, ct).reason == "not_shorter"


def test_refine_inserts_and_detected_wins():
    t = det_traj([0, 10])
    ct = CandidateTrajectory(1, [cand(f, x=float(f)) for f in (3, 4, 10)])
    out = refine(t, [ct], max_break=5)
    assert out.frames_with(Status.REFINED) == [3, 4]
    assert out.entries[10].status is Status.DETECTED
    assert out.frames_with(Status.INTERPOLATED) == [1, 2, 5, 6, 7, 8, 9]


def test_refine_overlapping_candidates_longer_first():
    t = det_traj([0])
    a = CandidateTrajectory(1, [cand(f, 50) for f in (2, 3)])
    b = CandidateTrajectory(1, [cand(f) for f in (3, 4, 5)])
    out = refine(t, [a, b], max_break=0)
    assert out.frames_with(Status.REFINED) == [3, 4, 5]


def test_refine_trajectory_accepts_same_and_rejects_foreign():
    rng = np.random.default_rng(0)
    center, other = rng.normal(size=32), rng.normal(size=32) * 3
    t = det_traj(range(0, 30), feat=lambda f: center + 0.05 * rng.normal(size=32))
    same = {f: [cand(f, float(f), feat=center + 0.05 * rng.normal(size=32))] for f in range(30, 40)}
    new, logs = refine_trajectory(t, same, range(30, 40))
    assert logs[0].result.accept
    assert new.frames_with(Status.REFINED) == list(range(30, 40))
    foreign = {f: [cand(f, float(f), feat=other + 0.05 * rng.normal(size=32))] for f in range(30, 40)}
    new, logs = refine_trajectory(t, foreign, range(30, 40))
    assert not logs[0].result.accept and new is t
