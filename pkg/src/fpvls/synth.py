"""Deterministic synthetic scenarios standing in for detector/embedder output.

A scenario is a handful of moving faces in a small frame. From one seed it
produces the frames, detection records, a pool of proposal candidates and
the ground-truth annotations, all mutually consistent.

Feature model: identity ``k`` has a unit center ``c_k`` in embedding space.
A detection embeds as ``normalize(c_k + noise)`` with ``|noise| ~ jitter``;
its 32-d proposal feature is ``P @ embedding + eps`` for a fixed seeded
projection ``P``. False positives and background proposals use a random
unit direction ``u`` with cosine below 0.3 to every identity center.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import (FEAT_DIM, Annotation, AnnotationSet, BBox, Candidate, FaceVector, Frame,
                    FrameStream)

BACKGROUND_MAX_COS = 0.3


@dataclass
class PersonSpec:
    person_id: int
    box: tuple[float, float, float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    enter: int = 0
    exit: int | None = None
    is_streamer: bool = False
    # [start, stop) intervals; occlusions are flagged and unrecoverable,
    # misses are detector failures on a visible face
    occlusions: list[tuple[int, int]] = field(default_factory=list)
    misses: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class Scenario:
    seed: int
    persons: list[PersonSpec]
    width: int = 160
    height: int = 120
    n_frames: int = 150
    fps: int = 30
    dim: int = 512
    embedding_jitter: float = 0.05
    feat_jitter: float = 0.1
    box_jitter: float = 0.0
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0
    separation: float = 0.5
    proposal_recall: float = 1.0
    proposal_jitter: float = 0.5
    background_proposals: int = 1

    def __post_init__(self):
        ids = [p.person_id for p in self.persons]
        if len(ids) != len(set(ids)):
            raise ValueError("overlapping person ids in scenario")
        self.persons = [p if isinstance(p, PersonSpec) else _person_from_dict(p)
                        for p in self.persons]

    def to_dict(self) -> dict:
        return asdict(self)


def _person_from_dict(d: dict) -> PersonSpec:
    d = dict(d)
    d["box"] = tuple(d["box"])
    d["velocity"] = tuple(d.get("velocity", (0.0, 0.0)))
    d["occlusions"] = [tuple(iv) for iv in d.get("occlusions", [])]
    d["misses"] = [tuple(iv) for iv in d.get("misses", [])]
    return PersonSpec(**d)


def load_scenario(path) -> Scenario:
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw.get("seed"), int):
        raise ValueError("scenario needs an explicit integer seed")
    raw["persons"] = [_person_from_dict(p) for p in raw["persons"]]
    return Scenario(**raw)


def save_scenario(path, scenario: Scenario) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")


@dataclass
class SynthOutput:
    stream: FrameStream
    detections: dict[int, list[FaceVector]]
    candidates: dict[int, list[Candidate]]
    annotations: AnnotationSet
    truth: dict[int, list[int]]  # frame -> person id per detection, -1 for false positives


def _in_any(t: int, intervals) -> bool:
    return any(a <= t < b for a, b in intervals)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def identity_centers(rng: np.random.Generator, k: int, dim: int, separation: float) -> np.ndarray:
    centers: list[np.ndarray] = []
    while len(centers) < k:
        c = _unit(rng.standard_normal(dim))
        if all(float(c @ o) < separation for o in centers):
            centers.append(c)
    return np.array(centers).reshape(k, dim)


def _background_direction(rng, centers: np.ndarray) -> np.ndarray:
    while True:
        u = _unit(rng.standard_normal(centers.shape[1]))
        if centers.size == 0 or np.max(centers @ u) < BACKGROUND_MAX_COS:
            return u


def box_path(p: PersonSpec, width: int, height: int, n_frames: int) -> dict[int, BBox]:
    """Linear motion reflected off the frame borders."""
    x0, y0, w, h = p.box
    vx, vy = p.velocity
    stop = n_frames if p.exit is None else min(p.exit, n_frames)
    out = {}
    for t in range(max(0, p.enter), stop):
        out[t] = BBox(_reflect(x0 + vx * t, width - w), _reflect(y0 + vy * t, height - h), w, h)
    return out


def _reflect(v: float, hi: float) -> float:
    if hi <= 0:
        return 0.0
    period = 2 * hi
    v = v % period
    return period - v if v > hi else v


def _jitter_box(rng, bb: BBox, sigma: float) -> BBox:
    if sigma <= 0:
        return bb
    dx, dy, dw, dh = rng.normal(0.0, sigma, 4)
    return BBox(bb.x + dx, bb.y + dy, max(1.0, bb.w + dw), max(1.0, bb.h + dh))


def _render(rng, sc: Scenario, paths, occluded) -> list[Frame]:
    h, w = sc.height, sc.width
    yy, xx = np.mgrid[0:h, 0:w]
    base = np.stack([40 + 60 * xx / max(w - 1, 1), 50 + 50 * yy / max(h - 1, 1),
                     np.full((h, w), 70.0)], axis=-1)
    texture = rng.normal(0, 6, (h, w, 3))
    colors = {p.person_id: rng.integers(90, 250, 3) for p in sc.persons}
    frames = []
    for t in range(sc.n_frames):
        img = base + texture + rng.normal(0, 2, (h, w, 3))
        for p in sc.persons:
            bb = paths[p.person_id].get(t)
            if bb is None:
                continue
            span = bb.clamp(w, h)
            if span is None:
                continue
            x0, y0, x1, y1 = span
            cx, cy = bb.center
            sub_y, sub_x = yy[y0:y1, x0:x1], xx[y0:y1, x0:x1]
            inside = ((sub_x + 0.5 - cx) / (bb.w / 2)) ** 2 + ((sub_y + 0.5 - cy) / (bb.h / 2)) ** 2 <= 1
            patch = img[y0:y1, x0:x1]
            face = colors[p.person_id] + 25 * np.sin(sub_x[..., None] * 0.9) * np.cos(sub_y[..., None] * 0.7)
            patch[inside] = face[inside]
            if (p.person_id, t) in occluded:
                patch[:] = (120, 120, 120)
        frames.append(Frame(t, np.clip(np.rint(img), 0, 255).astype(np.uint8)))
    return frames


def synth_generate(sc: Scenario) -> SynthOutput:
    rng = np.random.default_rng(sc.seed)
    centers = identity_centers(rng, len(sc.persons), sc.dim, sc.separation)
    center_of = {p.person_id: centers[i] for i, p in enumerate(sc.persons)}
    proj = rng.standard_normal((FEAT_DIM, sc.dim)) / np.sqrt(FEAT_DIM)
    feat_sigma = sc.feat_jitter / np.sqrt(FEAT_DIM)
    emb_sigma = sc.embedding_jitter / np.sqrt(sc.dim)

    def embed(center):
        return _unit(center + rng.normal(0.0, emb_sigma, sc.dim))

    def feat(vec):
        return proj @ vec + rng.normal(0.0, feat_sigma, FEAT_DIM)

    paths = {p.person_id: box_path(p, sc.width, sc.height, sc.n_frames) for p in sc.persons}
    occluded = {(p.person_id, t) for p in sc.persons for t in paths[p.person_id]
                if _in_any(t, p.occlusions)}
    # fixed offset per person so background proposals chain across frames
    bg_offset = {p.person_id: rng.uniform(-0.35, 0.35, 2) for p in sc.persons}

    annotations = AnnotationSet()
    detections: dict[int, list[FaceVector]] = {}
    candidates: dict[int, list[Candidate]] = {}
    truth: dict[int, list[int]] = {}
    for t in range(sc.n_frames):
        dets, who, cands = [], [], []
        for p in sc.persons:
            bb = paths[p.person_id].get(t)
            if bb is None:
                continue
            occ = (p.person_id, t) in occluded
            annotations.add(t, Annotation(p.person_id, bb, p.is_streamer, occ))
            missed = _in_any(t, p.misses) or rng.random() < sc.miss_rate
            if not occ and not missed:
                e = embed(center_of[p.person_id])
                dets.append(FaceVector(t, _jitter_box(rng, bb, sc.box_jitter),
                                       float(rng.uniform(0.9, 1.0)), e, feat(e)))
                who.append(p.person_id)
            elif not occ and rng.random() < sc.proposal_recall:
                e = embed(center_of[p.person_id])
                cands.append(Candidate(t, _jitter_box(rng, bb, sc.proposal_jitter),
                                       float(rng.uniform(0.6, 1.0)), feat(e)))
            for _ in range(sc.background_proposals):
                dx, dy = bg_offset[p.person_id] * (bb.w, bb.h)
                shifted = BBox(bb.x + dx, bb.y + dy, bb.w, bb.h)
                u = _background_direction(rng, centers)
                cands.append(Candidate(t, _jitter_box(rng, shifted, sc.proposal_jitter),
                                       float(rng.uniform(0.3, 0.8)), feat(u)))
        for _ in range(rng.poisson(sc.false_positive_rate) if sc.false_positive_rate > 0 else 0):
            size = float(rng.uniform(10, 20))
            bb = BBox(float(rng.uniform(0, sc.width - size)), float(rng.uniform(0, sc.height - size)),
                      size, size)
            u = _background_direction(rng, centers)
            dets.append(FaceVector(t, bb, float(rng.uniform(0.7, 0.9)), u, feat(u)))
            who.append(-1)
        if dets:
            detections[t] = dets
            truth[t] = who
        if cands:
            candidates[t] = cands
    frames = _render(rng, sc, paths, occluded)
    stream = FrameStream(sc.width, sc.height, sc.fps, frames)
    return SynthOutput(stream, detections, candidates, annotations, truth)


def random_scenario(seed: int, n_persons: int = 3, n_frames: int = 150, width: int = 160,
                    height: int = 120, streamer: bool = True, **kw) -> Scenario:
    """Random walkers with fixed face size; person 0 is the streamer if requested."""
    rng = np.random.default_rng(seed)
    persons = []
    for i in range(n_persons):
        size = float(rng.integers(14, 24))
        x = float(rng.uniform(0, width - size))
        y = float(rng.uniform(0, height - size))
        v = tuple(float(a) for a in rng.uniform(-0.6, 0.6, 2))
        persons.append(PersonSpec(i, (x, y, size, size), v, is_streamer=streamer and i == 0))
    return Scenario(seed=seed, persons=persons, n_frames=n_frames, width=width, height=height, **kw)


def streamer_designation(sc: Scenario, frame: int = 0) -> BBox | None:
    """The streamer's true box at ``frame``, as a designation would supply it."""
    for p in sc.persons:
        if p.is_streamer:
            return box_path(p, sc.width, sc.height, sc.n_frames).get(frame)
    return None
