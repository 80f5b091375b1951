"""Pixelation metrics against ground-truth annotations.

Per frame ``t``: ``g_t`` counts non-streamer faces not flagged as
over-pixelation, ``m_t`` those left unblurred, ``fp_t`` mosaics matching no
face, ``mm_t`` identity switches, ``c_t``/``d`` the matched count and summed
IoU, and ``op_t`` mosaics matched to flagged faces.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

from scipy.optimize import linear_sum_assignment

from .model import Annotation, BBox, FormatError, iou_matrix

OutputBoxes = Mapping[int, Sequence[tuple[int, BBox]]]


@dataclass
class FrameTally:
    frame: int
    g: int = 0
    m: int = 0
    fp: int = 0
    mm: int = 0
    c: int = 0
    op: int = 0
    d: float = 0.0


@dataclass
class FrameMatch:
    matches: list[tuple[int, int, float]]  # (gt person, output person, IoU)
    missed: list[int]
    false_positives: list[int]
    mismatched: list[int]


def match_frame(outputs: Sequence[tuple[int, BBox]], truth: Sequence[Annotation],
                iou_floor: float = 0.3, previous: Mapping[int, int] | None = None) -> FrameMatch:
    """One-to-one IoU matching of mosaics to faces in one frame.

    Correspondences from ``previous`` (gt id -> output id) are kept while
    their IoU stays at or above the floor; the rest are assigned by the
    Hungarian method on ``1 - IoU`` and pairs under the floor dropped. A
    match whose output id differs from the previous correspondence counts
    as a mismatch.
    """
    previous = previous or {}
    ov = iou_matrix([a.bbox for a in truth], [b for _, b in outputs])
    out_index = {pid: j for j, (pid, _) in enumerate(outputs)}
    pairs: dict[int, int] = {}
    for i, ann in enumerate(truth):
        j = out_index.get(previous.get(ann.person_id, object()))
        if j is not None and ov[i, j] >= iou_floor and j not in pairs.values():
            pairs[i] = j
    free_g = [i for i in range(len(truth)) if i not in pairs]
    free_o = [j for j in range(len(outputs)) if j not in pairs.values()]
    if free_g and free_o:
        sub = ov[free_g][:, free_o]
        rows, cols = linear_sum_assignment(1.0 - sub)
        for r, c in zip(rows, cols):
            if sub[r, c] >= iou_floor:
                pairs[free_g[r]] = free_o[c]
    matches, mismatched = [], []
    for i in sorted(pairs):
        gid, oid = truth[i].person_id, outputs[pairs[i]][0]
        matches.append((gid, oid, float(ov[i, pairs[i]])))
        if gid in previous and previous[gid] != oid:
            mismatched.append(gid)
    missed = [truth[i].person_id for i in range(len(truth)) if i not in pairs]
    used = set(pairs.values())
    fps = [outputs[j][0] for j in range(len(outputs)) if j not in used]
    return FrameMatch(matches, missed, fps, mismatched)


def mfpa(tallies: Sequence[FrameTally]) -> float | None:
    g = sum(t.g for t in tallies)
    if g == 0:
        return None
    return 1.0 - sum(t.m + t.fp + t.mm for t in tallies) / g


def mfpp(tallies: Sequence[FrameTally]) -> float | None:
    c = sum(t.c for t in tallies)
    return None if c == 0 else sum(t.d for t in tallies) / c


def opr(tallies: Sequence[FrameTally]) -> float:
    g = sum(t.g for t in tallies)
    return 0.0 if g == 0 else sum(t.op for t in tallies) / g


def longest_run(frames: Sequence[int]) -> int:
    best = run = 0
    prev = None
    for f in sorted(frames):
        run = run + 1 if prev is not None and f == prev + 1 else 1
        best = max(best, run)
        prev = f
    return best


def mp(correct: Mapping[int, Sequence[int]]) -> int:
    """Longest run of consecutive correctly pixelated frames over all tracks."""
    return max((longest_run(fs) for fs in correct.values()), default=0)


@dataclass
class MetricsReport:
    mfpa: float | None
    mfpp: float | None
    opr: float
    mp: int
    nop: bool
    totals: dict
    tallies: list[FrameTally] = field(default_factory=list)
    pairs: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tallies"] = [asdict(t) for t in self.tallies]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def evaluate(outputs: OutputBoxes, annotations: Mapping[int, Sequence[Annotation]],
             n_frames: int | None = None, iou_floor: float = 0.3) -> MetricsReport:
    frames = sorted(set(outputs) | set(annotations))
    if n_frames is not None:
        frames = sorted(set(frames) | set(range(n_frames)))
    previous: dict[int, int] = {}
    tallies, pairs = [], []
    correct: dict[int, list[int]] = {}
    for t in frames:
        truth = [a for a in annotations.get(t, ()) if not a.is_streamer]
        flagged = {a.person_id for a in truth if a.over_pixelation}
        fm = match_frame(list(outputs.get(t, ())), truth, iou_floor, previous)
        tal = FrameTally(t, g=sum(1 for a in truth if not a.over_pixelation))
        tal.fp = len(fm.false_positives)
        mism = set(fm.mismatched) - flagged
        tal.mm = len(mism)
        matched = set()
        for gid, oid, v in fm.matches:
            previous[gid] = oid
            matched.add(gid)
            if gid in flagged:
                tal.op += 1
            else:
                tal.c += 1
                tal.d += v
            pairs.append({"frame": t, "gt": gid, "output": oid, "iou": v})
        tal.m = sum(1 for gid in fm.missed if gid not in flagged)
        for a in truth:
            gid = a.person_id
            ok = (gid not in matched) if gid in flagged else (gid in matched and gid not in mism)
            if ok:
                correct.setdefault(gid, []).append(t)
            else:
                correct.setdefault(gid, [])
        tallies.append(tal)
    totals = {k: sum(getattr(t, k) for t in tallies) for k in ("g", "m", "fp", "mm", "c", "op")}
    totals["d"] = sum(t.d for t in tallies)
    return MetricsReport(mfpa(tallies), mfpp(tallies), opr(tallies), mp(correct), True,
                         totals, tallies, pairs)


# -- pixelation log -----------------------------------------------------------

LOG_FIELDS = ["frame", "person_id", "x", "y", "w", "h", "status"]


def write_pixelation_log(path, rows: Sequence[tuple[int, int, BBox, str]]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(LOG_FIELDS)
        for f, pid, bb, status in rows:
            wr.writerow([f, pid, repr(float(bb.x)), repr(float(bb.y)),
                         repr(float(bb.w)), repr(float(bb.h)), status])


def read_pixelation_log(path) -> dict[int, list[tuple[int, BBox]]]:
    out: dict[int, list[tuple[int, BBox]]] = {}
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames is None or not set(LOG_FIELDS[:6]) <= set(rd.fieldnames):
            raise FormatError(f"pixelation log needs columns {LOG_FIELDS}")
        for row in rd:
            try:
                bb = BBox(float(row["x"]), float(row["y"]), float(row["w"]), float(row["h"]))
                out.setdefault(int(row["frame"]), []).append((int(row["person_id"]), bb))
            except ValueError as exc:
                raise FormatError(f"bad pixelation log row {row}: {exc}") from exc
    return out
