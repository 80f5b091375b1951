"""Face-vector and proposal providers.

Network inference is out of scope: a provider either replays records
ingested from files or serves a synthetic scenario. Both expose the same
two calls, ``detect_and_embed`` and ``propose_in_gaps``.
"""
from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import BBox, Candidate, FaceVector, Frame, iou_matrix, read_candidates, read_detections
from .synth import Scenario, SynthOutput, synth_generate


class ProviderExhausted(RuntimeError):
    pass


def nms(candidates: Sequence[Candidate], iou_threshold: float = 0.7) -> list[Candidate]:
    """Greedy suppression by descending score.

    A box is dropped when its IoU with an already kept box reaches
    ``iou_threshold``. Equal scores keep input order.
    """
    if not 0 < iou_threshold <= 1:
        raise ValueError("iou_threshold must lie in (0, 1]")
    if not candidates:
        return []
    order = sorted(range(len(candidates)), key=lambda i: (-candidates[i].score, i))
    ov = iou_matrix([c.bbox for c in candidates], [c.bbox for c in candidates])
    keep: list[int] = []
    for i in order:
        if all(ov[i, j] < iou_threshold for j in keep):
            keep.append(i)
    return [candidates[i] for i in keep]


def filter_to_regions(candidates: Mapping[int, Sequence[Candidate]],
                      regions: Mapping[int, Sequence[BBox]]) -> dict[int, list[Candidate]]:
    """Keep candidates on gap frames whose center falls in a search region."""
    out = {}
    for f, boxes in regions.items():
        kept = [c for c in candidates.get(f, ())
                if any(r.contains_point(*c.bbox.center) for r in boxes)]
        if kept:
            out[f] = kept
    return out


class FileProvider:
    """Pure replay of ingested detection and candidate records."""

    def __init__(self, detections: Mapping[int, list[FaceVector]],
                 candidates: Mapping[int, list[Candidate]] | None = None,
                 n_frames: int | None = None):
        self.detections = dict(detections)
        self.candidates = dict(candidates or {})
        self.n_frames = n_frames
        if n_frames is not None and self.detections and max(self.detections) >= n_frames:
            raise ValueError(f"detections reference frame {max(self.detections)} "
                             f"beyond a {n_frames}-frame stream")

    @classmethod
    def from_files(cls, detections_path, candidates_path=None, dim: int = 512,
                   n_frames: int | None = None) -> "FileProvider":
        dets = read_detections(detections_path, dim)
        cands = read_candidates(candidates_path) if candidates_path else {}
        return cls(dets, cands, n_frames)

    def _indices(self, frames: Iterable[Frame | int]) -> list[int]:
        idx = [f if isinstance(f, int) else f.index for f in frames]
        if self.n_frames is not None and idx and max(idx) >= self.n_frames:
            raise ProviderExhausted(f"no records for frame {max(idx)}")
        return idx

    def detect_and_embed(self, frames: Iterable[Frame | int]) -> dict[int, list[FaceVector]]:
        return {f: list(self.detections[f]) for f in self._indices(frames) if f in self.detections}

    def propose_in_gaps(self, frames: Iterable[Frame | int],
                        regions: Mapping[int, Sequence[BBox]]) -> dict[int, list[Candidate]]:
        wanted = set(self._indices(frames))
        return filter_to_regions(self.candidates, {f: r for f, r in regions.items() if f in wanted})


class SyntheticProvider(FileProvider):
    """Provider backed by a generated scenario."""

    def __init__(self, scenario: Scenario, output: SynthOutput | None = None):
        self.scenario = scenario
        self.output = output or synth_generate(scenario)
        super().__init__(self.output.detections, self.output.candidates, scenario.n_frames)


def vectors_equal(a: FaceVector, b: FaceVector) -> bool:
    return (a.frame_index == b.frame_index and a.bbox == b.bbox and a.confidence == b.confidence
            and np.array_equal(a.embedding, b.embedding) and np.array_equal(a.feat32, b.feat32))
