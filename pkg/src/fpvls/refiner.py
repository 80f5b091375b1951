"""Gap refinement: chain proposals into candidate trajectories, test, fill back."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .elr import ELRResult, two_sample_test
from .model import BBox, Candidate, Entry, Status, Trajectory, iou_matrix
from .trajectory import interpolate_breaks


@dataclass
class CandidateTrajectory:
    person_id: int
    candidates: list[Candidate] = field(default_factory=list)

    @property
    def frames(self) -> list[int]:
        return [c.frame_index for c in self.candidates]

    @property
    def last(self) -> Candidate:
        return self.candidates[-1]

    def feats(self) -> np.ndarray:
        return np.stack([c.feat32 for c in self.candidates])

    def __len__(self) -> int:
        return len(self.candidates)


def match_boxes(prev: Sequence[BBox], cur: Sequence[BBox], iou_floor: float = 0.1) -> list[tuple[int, int]]:
    """Minimum total ``1 - IoU`` assignment; pairs under the floor are dropped."""
    if not prev or not cur:
        return []
    ov = iou_matrix(prev, cur)
    rows, cols = linear_sum_assignment(1.0 - ov)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if ov[r, c] >= iou_floor]


def associate_candidates(per_frame: Mapping[int, Sequence[Candidate]], iou_floor: float = 0.1,
                         person_id: int = -1) -> list[CandidateTrajectory]:
    """Link per-frame candidates into chains frame to frame.

    A chain extends only into the next frame. Unmatched candidates start new
    chains. Output is ordered by first frame, then by creation order.
    """
    chains: list[CandidateTrajectory] = []
    active: list[int] = []
    prev_frame = None
    for f in sorted(per_frame):
        cands = list(per_frame[f])
        if prev_frame is None or f != prev_frame + 1:
            active = []
        prev_boxes = [chains[i].last.bbox for i in active]
        pairs = match_boxes(prev_boxes, [c.bbox for c in cands], iou_floor)
        taken = set()
        next_active = []
        for r, c in pairs:
            chains[active[r]].candidates.append(cands[c])
            taken.add(c)
            next_active.append(active[r])
        for j, c in enumerate(cands):
            if j not in taken:
                chains.append(CandidateTrajectory(person_id, [c]))
                next_active.append(len(chains) - 1)
        active = next_active
        prev_frame = f
    return chains


def nearest_detections(traj: Trajectory, frames: Sequence[int], count: int) -> np.ndarray:
    """feat32 of the ``count`` detected entries closest in time to ``frames``, frame-ordered."""
    a, b = min(frames), max(frames)
    detected = [f for f, e in traj.entries.items()
                if e.status is Status.DETECTED and e.feat32 is not None]
    dist = lambda f: a - f if f < a else (f - b if f > b else 0)  # noqa: E731
    chosen = sorted(sorted(detected, key=lambda f: (dist(f), f))[:count])
    return np.stack([traj.entries[f].feat32 for f in chosen]) if chosen else np.zeros((0, 32))


def test_candidate(traj: Trajectory, cand: CandidateTrajectory, confidence: float = 0.95,
                   threshold: float | None = None, min_len: int = 2) -> ELRResult:
    m = traj.detected_count()
    mp = len(cand)
    if mp < max(2, min_len):
        return two_sample_test(np.zeros((0, 32)), cand.feats(), confidence, threshold,
                               min_len=max(2, min_len))
    if mp >= m:
        res = two_sample_test(np.zeros((0, 32)), np.zeros((0, 32)), confidence, threshold)
        res.reason = "not_shorter"
        return res
    x = nearest_detections(traj, cand.frames, mp)
    return two_sample_test(x, cand.feats(), confidence, threshold, min_len=min_len)


def refine(traj: Trajectory, accepted: Sequence[CandidateTrajectory], max_break: int = 5,
           frames: Sequence[int] | None = None) -> Trajectory:
    """Insert accepted candidate boxes as ``refined`` entries, then re-interpolate.

    Longer candidate trajectories go first; one that overlaps an already
    inserted candidate trajectory is skipped. Detected entries always win.
    """
    out = copy.deepcopy(traj)
    writable = None if frames is None else set(frames)
    claimed: set[int] = set()
    for ct in sorted(accepted, key=lambda c: (-len(c), c.frames[0])):
        fs = set(ct.frames)
        if fs & claimed:
            continue
        claimed |= fs
        for c in ct.candidates:
            if writable is not None and c.frame_index not in writable:
                continue
            old = out.entries.get(c.frame_index)
            if old is not None and old.status is not Status.GAP:
                continue
            out.entries[c.frame_index] = Entry(c.bbox, Status.REFINED, c.feat32)
    return interpolate_breaks(out, max_break, frames)


@dataclass
class RefineLog:
    person_id: int
    frames: list[int]
    result: ELRResult

    def to_dict(self) -> dict:
        r = self.result
        return {"person_id": self.person_id, "first_frame": self.frames[0],
                "length": len(self.frames), "decision": r.decision,
                "statistic": r.statistic if math.isfinite(r.statistic) else "inf",
                "reason": r.reason}


def refine_trajectory(traj: Trajectory, candidates: Mapping[int, Sequence[Candidate]],
                      frames: Sequence[int], confidence: float = 0.95,
                      threshold: float | None = None, iou_floor: float = 0.1,
                      min_len: int = 2, max_break: int = 5) -> tuple[Trajectory, list[RefineLog]]:
    """Associate, test and fill back the candidates already clipped to ``traj``'s gaps."""
    chains = associate_candidates(candidates, iou_floor, traj.person_id)
    logs = []
    accepted = []
    for ct in chains:
        res = test_candidate(traj, ct, confidence, threshold, min_len)
        logs.append(RefineLog(traj.person_id, ct.frames, res))
        if res.accept:
            accepted.append(ct)
    if not accepted:
        return traj, logs
    return refine(traj, accepted, max_break, frames), logs
