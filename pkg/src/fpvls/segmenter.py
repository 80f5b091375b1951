"""Segment slicing and the buffered broadcast schedule.

With segments of ``N`` frames and a ``2N``-frame buffer at stream start,
every frame goes out exactly ``2N`` frames after it was recorded, provided
each segment is processed within ``N / fps`` seconds.

Frame indices here are 0-based. Frame ``f`` is recorded during
``[f / fps, (f + 1) / fps)``; the segment holding it is complete at
``ceil((f + 1) / N) * N / fps``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .model import FaceVector, FrameStream, Segment

# absorbs float rounding in N / fps sums; budgets are compared in seconds
_TIME_EPS = 1e-9


@dataclass(frozen=True)
class ScheduleEntry:
    frame_index: int
    record_complete_time: float
    process_deadline: float
    broadcast_frame_number: int
    broadcast_time: float


@dataclass(frozen=True)
class ContinuityVerdict:
    continuous: bool
    first_stall_segment: int | None = None
    stall_frame: int | None = None
    late_by: float = 0.0

    @property
    def label(self) -> str:
        return "continuous" if self.continuous else "stall"


def segmentize(stream: FrameStream, n: int,
               faces: dict[int, list[FaceVector]] | None = None) -> list[Segment]:
    if n < 1:
        raise ValueError("segment length must be >= 1")
    faces = faces or {}
    out = []
    for q, start in enumerate(range(0, len(stream), n)):
        frames = stream.frames[start:start + n]
        seg_faces = {fr.index: list(faces[fr.index]) for fr in frames if fr.index in faces}
        out.append(Segment(q, frames, seg_faces))
    return out


def broadcast_schedule(f: int, n: int, fps: float) -> ScheduleEntry:
    if fps <= 0:
        raise ValueError("fps must be positive")
    if n < 1 or f < 0:
        raise ValueError("need n >= 1 and f >= 0")
    complete = math.ceil((f + 1) / n) * n / fps
    return ScheduleEntry(
        frame_index=f,
        record_complete_time=complete,
        process_deadline=complete + n / fps,
        broadcast_frame_number=f + 2 * n,
        broadcast_time=(f + 2 * n) / fps,
    )


def simulate_continuity(stream: FrameStream | int, n: int, fps: float,
                        per_segment_cost: float | Sequence[float]) -> ContinuityVerdict:
    """Replay the record/process/broadcast timeline on one sequential worker.

    ``per_segment_cost`` is either one cost in seconds for all segments or a
    per-segment sequence (for example measured processing times). A segment
    stalls when its processing finishes after its first frame's broadcast slot.
    """
    n_frames = stream if isinstance(stream, int) else len(stream)
    n_segments = math.ceil(n_frames / n) if n_frames else 0
    if isinstance(per_segment_cost, (int, float)):
        costs: Iterable[float] = [float(per_segment_cost)] * n_segments
    else:
        costs = list(per_segment_cost)
        if len(costs) < n_segments:
            raise ValueError("fewer costs than segments")
    busy_until = 0.0
    for q, cost in zip(range(n_segments), costs):
        first = q * n
        last = min(first + n, n_frames) - 1
        recorded = (last + 1) / fps
        done = max(recorded, busy_until) + cost
        due = (first + 2 * n) / fps
        if done > due + _TIME_EPS:
            return ContinuityVerdict(False, q, first, done - due)
        busy_until = done
    return ContinuityVerdict(True)
