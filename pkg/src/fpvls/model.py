"""Domain types, box geometry and the on-disk formats shared by every stage.

File formats
------------
FPVL container
    ``b"FPVL"`` followed by little-endian u32 ``width, height, fps,
    frame_count`` and then ``frame_count`` raw RGB frames, row-major,
    interleaved, 8 bits per channel.
Detection / candidate records
    JSON lines. Detections carry ``frame, x, y, w, h, conf, embedding,
    feat32``; candidates carry ``frame, x, y, w, h, score, feat32``.
Annotations
    CSV lines ``frame,person_id,x,y,w,h,is_streamer,over_pixelation``.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"FPVL"
_HEADER = struct.Struct("<4sIIII")
FEAT_DIM = 32


class FormatError(ValueError):
    """Raised when an input file does not match its declared format."""


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box extents must be positive, got w={self.w} h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def union(self, other: "BBox") -> "BBox":
        x1, y1 = min(self.x, other.x), min(self.y, other.y)
        return BBox(x1, y1, max(self.x2, other.x2) - x1, max(self.y2, other.y2) - y1)

    def scaled(self, factor: float) -> "BBox":
        """Scale width and height by ``factor`` about the box center."""
        cx, cy = self.center
        w, h = self.w * factor, self.h * factor
        return BBox(cx - w / 2.0, cy - h / 2.0, w, h)

    def contains_point(self, px: float, py: float) -> bool:
        return self.x <= px <= self.x2 and self.y <= py <= self.y2

    def clamp(self, width: int, height: int) -> tuple[int, int, int, int] | None:
        """Integer pixel span ``(x0, y0, x1, y1)`` inside the frame, or None."""
        x0 = max(0, int(math.floor(self.x)))
        y0 = max(0, int(math.floor(self.y)))
        x1 = min(width, int(math.ceil(self.x2)))
        y1 = min(height, int(math.ceil(self.y2)))
        if x1 <= x0 or y1 <= y0:
            return None
        return x0, y0, x1, y1


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(boxes_a: Sequence[BBox], boxes_b: Sequence[BBox]) -> np.ndarray:
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = np.array([bb.as_tuple() for bb in boxes_a], dtype=float)
    b = np.array([bb.as_tuple() for bb in boxes_b], dtype=float)
    ax2, ay2 = a[:, 0] + a[:, 2], a[:, 1] + a[:, 3]
    bx2, by2 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    iw = np.minimum(ax2[:, None], bx2[None, :]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(ay2[:, None], by2[None, :]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return inter / union


@dataclass(frozen=True)
class Frame:
    index: int
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        if self.pixels.dtype != np.uint8 or self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("frame pixels must be a (height, width, 3) uint8 array")
        self.pixels.setflags(write=False)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class FrameStream:
    width: int
    height: int
    fps: int
    frames: list[Frame] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, i):
        return self.frames[i]


@dataclass(frozen=True)
class FaceVector:
    frame_index: int
    bbox: BBox
    confidence: float
    embedding: np.ndarray
    feat32: np.ndarray

    def __post_init__(self):
        self.embedding.setflags(write=False)
        self.feat32.setflags(write=False)


@dataclass(frozen=True)
class Candidate:
    frame_index: int
    bbox: BBox
    score: float
    feat32: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"candidate score outside [0, 1]: {self.score}")
        self.feat32.setflags(write=False)


@dataclass
class Segment:
    index: int
    frames: list[Frame]
    faces: dict[int, list[FaceVector]] = field(default_factory=dict)

    @property
    def start(self) -> int:
        return self.frames[0].index

    @property
    def stop(self) -> int:
        return self.frames[-1].index + 1

    def frame_range(self) -> range:
        return range(self.start, self.stop)

    def vectors(self) -> list[FaceVector]:
        return [fv for f in sorted(self.faces) for fv in self.faces[f]]


class Status(str, Enum):
    DETECTED = "detected"
    INTERPOLATED = "interpolated"
    REFINED = "refined"
    GAP = "gap"


RENDERED = (Status.DETECTED, Status.INTERPOLATED, Status.REFINED)


@dataclass
class Entry:
    bbox: BBox | None
    status: Status
    feat32: np.ndarray | None = None

    def __post_init__(self):
        if (self.bbox is None) != (self.status is Status.GAP):
            raise ValueError("gap entries carry no box; every other status needs one")


@dataclass
class Trajectory:
    person_id: int
    is_streamer: bool = False
    entries: dict[int, Entry] = field(default_factory=dict)

    def frames_with(self, *statuses: Status) -> list[int]:
        return sorted(f for f, e in self.entries.items() if e.status in statuses)

    def known_frames(self) -> list[int]:
        return self.frames_with(*RENDERED)

    def detected_count(self) -> int:
        return sum(1 for e in self.entries.values() if e.status is Status.DETECTED)

    def box_at(self, frame: int) -> BBox | None:
        e = self.entries.get(frame)
        return None if e is None else e.bbox


@dataclass(frozen=True)
class Annotation:
    person_id: int
    bbox: BBox
    is_streamer: bool = False
    over_pixelation: bool = False


class AnnotationSet(dict):
    """Mapping frame index -> list of :class:`Annotation`."""

    def add(self, frame: int, ann: Annotation) -> None:
        anns = self.setdefault(frame, [])
        if any(a.person_id == ann.person_id for a in anns):
            raise ValueError(f"duplicate person {ann.person_id} in frame {frame}")
        anns.append(ann)


# -- FPVL container ---------------------------------------------------------

def write_frame_container(path, stream: FrameStream) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, stream.width, stream.height, stream.fps, len(stream)))
        for fr in stream.frames:
            if fr.pixels.shape != (stream.height, stream.width, 3):
                raise ValueError(f"frame {fr.index} does not match stream geometry")
            fh.write(np.ascontiguousarray(fr.pixels).tobytes())


def read_frame_container(path) -> FrameStream:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError("truncated header")
    magic, width, height, fps, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if width == 0 or height == 0:
        raise FormatError("zero frame dimensions")
    frame_bytes = width * height * 3
    expected = _HEADER.size + frame_bytes * count
    if len(data) < expected:
        raise FormatError(f"truncated payload: {count} frames declared, "
                          f"{(len(data) - _HEADER.size) // frame_bytes} present")
    if len(data) > expected:
        raise FormatError("trailing bytes after declared frames")
    payload = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    frames = [
        Frame(i, payload[i * frame_bytes:(i + 1) * frame_bytes].reshape(height, width, 3).copy())
        for i in range(count)
    ]
    return FrameStream(width, height, fps, frames)


# -- detection / candidate records -------------------------------------------

def _finite_array(values, name, dim=None) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise FormatError(f"{name} must be a flat list")
    if dim is not None and arr.shape[0] != dim:
        raise FormatError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"non-finite value in {name}")
    return arr


def _bbox_from(rec) -> BBox:
    vals = [float(rec[k]) for k in ("x", "y", "w", "h")]
    if not all(math.isfinite(v) for v in vals):
        raise FormatError("non-finite box coordinate")
    return BBox(*vals)


def _iter_json_lines(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc


def parse_detection(rec: dict, dim: int = 512) -> FaceVector:
    emb = _finite_array(rec["embedding"], "embedding", dim)
    norm = np.linalg.norm(emb)
    if norm == 0:
        raise FormatError("zero-norm embedding")
    conf = float(rec["conf"])
    if not math.isfinite(conf):
        raise FormatError("non-finite confidence")
    return FaceVector(
        frame_index=int(rec["frame"]),
        bbox=_bbox_from(rec),
        confidence=conf,
        embedding=emb / norm,
        feat32=_finite_array(rec["feat32"], "feat32", FEAT_DIM),
    )


def read_detections(path, dim: int = 512) -> dict[int, list[FaceVector]]:
    """Load detection records grouped by frame; embeddings come back unit-norm.

    Records within one frame keep their file order.
    """
    out: dict[int, list[FaceVector]] = {}
    for rec in _iter_json_lines(path):
        fv = parse_detection(rec, dim)
        out.setdefault(fv.frame_index, []).append(fv)
    return dict(sorted(out.items()))


def _box_fields(bb: BBox) -> dict:
    return {"x": bb.x, "y": bb.y, "w": bb.w, "h": bb.h}


def write_detections(path, faces: Iterable[FaceVector]) -> None:
    with open(path, "w") as fh:
        for fv in faces:
            rec = {"frame": fv.frame_index, **_box_fields(fv.bbox), "conf": fv.confidence,
                   "embedding": fv.embedding.tolist(), "feat32": fv.feat32.tolist()}
            fh.write(json.dumps(rec) + "\n")


def read_candidates(path) -> dict[int, list[Candidate]]:
    out: dict[int, list[Candidate]] = {}
    for rec in _iter_json_lines(path):
        score = float(rec["score"])
        if not math.isfinite(score):
            raise FormatError("non-finite score")
        c = Candidate(int(rec["frame"]), _bbox_from(rec), score,
                      _finite_array(rec["feat32"], "feat32", FEAT_DIM))
        out.setdefault(c.frame_index, []).append(c)
    return dict(sorted(out.items()))


def write_candidates(path, candidates: Iterable[Candidate]) -> None:
    with open(path, "w") as fh:
        for c in candidates:
            rec = {"frame": c.frame_index, **_box_fields(c.bbox), "score": c.score,
                   "feat32": c.feat32.tolist()}
            fh.write(json.dumps(rec) + "\n")


# -- annotations -------------------------------------------------------------

def _flag(s: str) -> bool:
    s = s.strip().lower()
    if s in ("1", "true"):
        return True
    if s in ("0", "false"):
        return False
    raise FormatError(f"bad flag {s!r}")


def read_annotations(path) -> AnnotationSet:
    anns = AnnotationSet()
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "frame":
                continue
            if len(row) != 8:
                raise FormatError(f"annotation row has {len(row)} fields, expected 8")
            frame, pid = int(row[0]), int(row[1])
            bb = BBox(*(float(v) for v in row[2:6]))
            anns.add(frame, Annotation(pid, bb, _flag(row[6]), _flag(row[7])))
    return AnnotationSet(sorted(anns.items()))


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def write_annotations(path, anns: AnnotationSet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for frame in sorted(anns):
            for a in sorted(anns[frame], key=lambda a: a.person_id):
                b = a.bbox
                w.writerow([frame, a.person_id, _num(b.x), _num(b.y), _num(b.w), _num(b.h),
                            int(a.is_streamer), int(a.over_pixelation)])
