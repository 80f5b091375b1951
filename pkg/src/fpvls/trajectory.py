"""Raw trajectories from cluster labels, break interpolation and gap regions."""
from __future__ import annotations

import copy
from typing import Iterable, Mapping, Sequence

from .model import RENDERED, BBox, Entry, FaceVector, Status, Trajectory


class ClusteringError(RuntimeError):
    """Two faces of one frame ended up in one identity."""


def build_raw(person_ids: Sequence[int], vectors: Sequence[FaceVector],
              trajectories: Mapping[int, Trajectory] | None = None,
              min_support: int = 1) -> dict[int, Trajectory]:
    """Link labelled face vectors into per-person trajectories.

    Existing trajectories are extended in place (a copy of the mapping is
    returned). Identities with fewer than ``min_support`` vectors in this
    batch are withheld unless they already own a trajectory.
    """
    if len(person_ids) != len(vectors):
        raise ValueError("one label per vector required")
    out = dict(trajectories or {})
    groups: dict[int, list[FaceVector]] = {}
    for pid, fv in zip(person_ids, vectors):
        groups.setdefault(int(pid), []).append(fv)
    for pid in sorted(groups):
        members = groups[pid]
        frames = [fv.frame_index for fv in members]
        if len(frames) != len(set(frames)):
            raise ClusteringError(f"person {pid} holds two faces in one frame")
        if len(members) < min_support and pid not in out:
            continue
        traj = out.get(pid)
        if traj is None:
            traj = out[pid] = Trajectory(pid)
        for fv in members:
            old = traj.entries.get(fv.frame_index)
            if old is not None and old.status is Status.DETECTED:
                raise ClusteringError(f"person {pid} already detected on frame {fv.frame_index}")
            traj.entries[fv.frame_index] = Entry(fv.bbox, Status.DETECTED, fv.feat32)
    return out


def _lerp(a: BBox, b: BBox, t: float) -> BBox:
    return BBox(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t,
                a.w + (b.w - a.w) * t, a.h + (b.h - a.h) * t)


def interpolate_breaks(traj: Trajectory, max_break: int = 5,
                       frames: Iterable[int] | None = None) -> Trajectory:
    """Fill missing runs of at most ``max_break`` frames between two known boxes.

    Boxes are interpolated linearly per component. Runs at either end are
    never extrapolated. With ``frames`` given, only those frames may be
    written (anchors may lie anywhere).
    """
    if max_break < 0:
        raise ValueError("max_break must be >= 0")
    out = copy.deepcopy(traj)
    writable = None if frames is None else set(frames)
    known = out.known_frames()
    for a, b in zip(known, known[1:]):
        run = b - a - 1
        if run == 0 or run > max_break:
            continue
        ba, bb = out.entries[a].bbox, out.entries[b].bbox
        for f in range(a + 1, b):
            if writable is not None and f not in writable:
                continue
            out.entries[f] = Entry(_lerp(ba, bb, (f - a) / (b - a)), Status.INTERPOLATED)
    return out


def missing_runs(traj: Trajectory, lo: int, hi: int) -> list[tuple[int, int]]:
    """Maximal ``[start, stop)`` runs in ``[lo, hi)`` without a rendered box."""
    runs = []
    start = None
    for f in range(lo, hi):
        e = traj.entries.get(f)
        missing = e is None or e.status not in RENDERED
        if missing and start is None:
            start = f
        elif not missing and start is not None:
            runs.append((start, f))
            start = None
    if start is not None:
        runs.append((start, hi))
    return runs


def _flanks(traj: Trajectory, start: int, stop: int, lookback: int | None):
    known = traj.known_frames()
    left = [f for f in known if f < start and (lookback is None or start - f <= lookback)]
    right = [f for f in known if f >= stop and (lookback is None or f - stop < lookback)]
    return (left[-1] if left else None), (right[0] if right else None)


def gap_regions(traj: Trajectory, frames: Iterable[int], gamma: float = 1.5,
                lookback: int | None = None) -> dict[int, BBox]:
    """Search boxes for every frame of ``frames`` the trajectory leaves uncovered.

    The box is the union of the flanking known boxes, scaled by ``gamma`` in
    width and height about its center. A run with only one flank uses that
    flank alone; a run with none gets no region.
    """
    frames = sorted(frames)
    if not frames:
        return {}
    out = {}
    for start, stop in missing_runs(traj, frames[0], frames[-1] + 1):
        left, right = _flanks(traj, start, stop, lookback)
        boxes = [traj.entries[f].bbox for f in (left, right) if f is not None]
        if not boxes:
            continue
        region = boxes[0] if len(boxes) == 1 else boxes[0].union(boxes[1])
        region = region.scaled(gamma)
        for f in range(start, stop):
            out[f] = region
    return out


def mark_gaps(traj: Trajectory, frames: Iterable[int]) -> int:
    """Record explicit ``gap`` entries for uncovered frames inside the known span.

    Returns the number of gap frames marked.
    """
    known = traj.known_frames()
    if not known:
        return 0
    n = 0
    for f in frames:
        if known[0] < f < known[-1] and f not in traj.entries:
            traj.entries[f] = Entry(None, Status.GAP)
            n += 1
    return n


def gap_count(trajectories: Iterable[Trajectory]) -> int:
    return sum(len(t.frames_with(Status.GAP)) for t in trajectories)
