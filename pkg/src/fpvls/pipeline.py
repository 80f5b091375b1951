"""Segment-by-segment run of the whole engine.

Per segment: detect and embed, cluster, extend raw trajectories, fill short
breaks, search the remaining gaps for proposals, test them and fill back,
mark what is left as gaps, then blur. Frames leave in broadcast order,
``2N`` frames after they were recorded.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .config import Config
from .evaluator import MetricsReport, evaluate, write_pixelation_log
from .model import (RENDERED, AnnotationSet, BBox, FaceVector, FrameStream, Status, Trajectory,
                    write_frame_container)
from .piap import PIAP
from .pixelator import designate_streamer, render_frame
from .provider import FileProvider, nms
from .refiner import RefineLog, refine_trajectory
from .segmenter import ContinuityVerdict, ScheduleEntry, broadcast_schedule, simulate_continuity
from .trajectory import build_raw, gap_regions, interpolate_breaks, mark_gaps

log = logging.getLogger(__name__)


class ConvergenceBudgetExceeded(RuntimeError):
    pass


@dataclass
class SegmentTiming:
    segment: int
    first_frame: int
    n_frames: int
    n_vectors: int
    iterations: int
    converged: bool
    seconds: float


@dataclass
class RunResult:
    output: FrameStream
    trajectories: dict[int, Trajectory]
    streamers: set[int]
    pixelation: list[tuple[int, int, BBox, str]]
    emission: list[ScheduleEntry]
    timings: list[SegmentTiming]
    verdict: ContinuityVerdict
    refine_logs: list[RefineLog]
    labels: dict[int, list[int]]  # frame -> person id per detection, -1 when withheld
    checks: dict[str, bool] = field(default_factory=dict)
    report: MetricsReport | None = None

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def gap_count(self) -> int:
        return sum(len(t.frames_with(Status.GAP)) for t in self.trajectories.values())

    def outputs_by_frame(self) -> dict[int, list[tuple[int, BBox]]]:
        out: dict[int, list[tuple[int, BBox]]] = {}
        for f, pid, bb, _ in self.pixelation:
            out.setdefault(f, []).append((pid, bb))
        return out


def _flatten(dets: Mapping[int, list[FaceVector]]) -> list[FaceVector]:
    return [fv for f in sorted(dets) for fv in dets[f]]


def _refine_segment(cfg: Config, provider: FileProvider, trajectories: dict[int, Trajectory],
                    frames: range) -> list[RefineLog]:
    logs = []
    for pid in sorted(trajectories):
        traj = trajectories[pid]
        regions = gap_regions(traj, frames, cfg.gap_dilation, lookback=cfg.segment_frames)
        if not regions:
            continue
        cands = provider.propose_in_gaps(frames, {f: [r] for f, r in regions.items()})
        cands = {f: nms(c, cfg.nms_iou) for f, c in cands.items()}
        if not cands:
            continue
        new, rl = refine_trajectory(traj, cands, frames, cfg.elr_confidence,
                                    cfg.elr_threshold_override, cfg.hungarian_iou_floor,
                                    cfg.min_candidate_len, cfg.max_break)
        trajectories[pid] = new
        logs.extend(rl)
    return logs


def run_pipeline(cfg: Config, stream: FrameStream, provider: FileProvider,
                 annotations: AnnotationSet | None = None) -> RunResult:
    n = cfg.segment_frames
    n_frames = len(stream)
    if provider.n_frames is not None and provider.n_frames != n_frames:
        raise ValueError(f"provider covers {provider.n_frames} frames, stream has {n_frames}")
    if cfg.streamer_bbox is not None and cfg.streamer_frame >= min(2 * n, n_frames):
        log.warning("streamer_frame %d lies outside the %d-frame buffer section",
                    cfg.streamer_frame, 2 * n)
    piap = PIAP(cfg.embedding_dim, cfg.damping, cfg.max_iters, cfg.stable_iters,
                cfg.eviction_segments)
    trajectories: dict[int, Trajectory] = {}
    streamers: set[int] = set()
    designated = cfg.streamer_bbox is None
    out_frames = list(stream.frames)
    pixelation: list[tuple[int, int, BBox, str]] = []
    timings: list[SegmentTiming] = []
    refine_logs: list[RefineLog] = []
    labels: dict[int, list[int]] = {}
    failures = 0

    for q, start in enumerate(range(0, n_frames, n)):
        t0 = time.perf_counter()
        frames = range(start, min(start + n, n_frames))
        dets = provider.detect_and_embed(frames)
        vectors = _flatten(dets)
        res = piap.cluster_segment(vectors, q)
        if not res.converged:
            failures += 1
            if failures > cfg.failure_budget:
                raise ConvergenceBudgetExceeded(
                    f"{failures} segments without consensus (budget {cfg.failure_budget})")
        trajectories = build_raw(res.person_ids, vectors, trajectories, cfg.min_cluster_support)
        kept = set(trajectories)
        for pid, fv in zip(res.person_ids, vectors):
            labels.setdefault(fv.frame_index, []).append(pid if pid in kept else -1)
        for pid in sorted(trajectories):
            trajectories[pid] = interpolate_breaks(trajectories[pid], cfg.max_break, frames)
        if cfg.refine:
            refine_logs.extend(_refine_segment(cfg, provider, trajectories, frames))
        # gap entries render nothing, so runs closed by this segment may be marked late
        for traj in trajectories.values():
            mark_gaps(traj, range(frames.stop))
        if not designated and cfg.streamer_frame < frames.stop:
            streamers = designate_streamer(trajectories, cfg.streamer_bbox, cfg.streamer_frame,
                                           window=cfg.max_break)
            for pid in streamers:
                trajectories[pid].is_streamer = True
            designated = True
        for f in frames:
            boxes = []
            for pid in sorted(trajectories):
                traj = trajectories[pid]
                e = traj.entries.get(f)
                if traj.is_streamer or e is None or e.status not in RENDERED:
                    continue
                boxes.append((pid, e.bbox))
                pixelation.append((f, pid, e.bbox, e.status.value))
            out_frames[f] = render_frame(stream.frames[f], boxes, cfg.sigma)
        timings.append(SegmentTiming(q, start, len(frames), len(vectors), res.iterations,
                                     res.converged, time.perf_counter() - t0))

    emission = sorted((broadcast_schedule(f, n, cfg.fps) for f in range(n_frames)),
                      key=lambda s: s.broadcast_frame_number)
    if cfg.realtime:
        _pace(emission, cfg.fps)
    verdict = simulate_continuity(n_frames, n, cfg.fps, [t.seconds for t in timings])
    if not verdict.continuous:
        log.warning("segment %s would stall the broadcast by %.3f s",
                    verdict.first_stall_segment, verdict.late_by)
    output = FrameStream(stream.width, stream.height, stream.fps, out_frames)
    result = RunResult(output, trajectories, streamers, pixelation, emission, timings, verdict,
                       refine_logs, labels)
    result.checks = self_checks(cfg, stream, result)
    if annotations is not None:
        result.report = evaluate(result.outputs_by_frame(), annotations, n_frames,
                                 cfg.eval_iou_floor)
    return result


def _pace(emission: list[ScheduleEntry], fps: float) -> None:
    t0 = time.monotonic()
    first = emission[0].broadcast_time if emission else 0.0
    for e in emission:
        delay = (e.broadcast_time - first) - (time.monotonic() - t0)
        if delay > 0:
            time.sleep(delay)


def self_checks(cfg: Config, stream: FrameStream, res: RunResult) -> dict[str, bool]:
    """Invariants every run must satisfy; any failure makes the CLI exit non-zero."""
    checks = {}
    exclusive = True
    for f, pids in res.labels.items():
        real = [p for p in pids if p >= 0]
        exclusive &= len(real) == len(set(real))
    checks["exclusion"] = exclusive
    n = cfg.segment_frames
    order = [e.broadcast_frame_number for e in res.emission]
    checks["lag"] = (all(e.broadcast_frame_number - e.frame_index == 2 * n for e in res.emission)
                     and order == sorted(order) and len(order) == len(stream))
    checks["pixel_fidelity"] = pixel_fidelity(stream, res.output, res.outputs_by_frame())
    checks["geometry"] = (len(res.output) == len(stream) and res.output.width == stream.width
                          and res.output.height == stream.height and res.output.fps == stream.fps)
    if not cfg.refine:
        checks["no_refined"] = not any(t.frames_with(Status.REFINED)
                                       for t in res.trajectories.values())
    return checks


def pixel_fidelity(before: FrameStream, after: FrameStream,
                   boxes: Mapping[int, list[tuple[int, BBox]]]) -> bool:
    """True when every changed pixel lies inside some rendered box of its frame."""
    for i, (a, b) in enumerate(zip(before.frames, after.frames)):
        diff = np.any(a.pixels != b.pixels, axis=2)
        if not diff.any():
            continue
        allowed = np.zeros_like(diff)
        for _, bb in boxes.get(i, ()):
            span = bb.clamp(before.width, before.height)
            if span is not None:
                x0, y0, x1, y1 = span
                allowed[y0:y1, x0:x1] = True
        if np.any(diff & ~allowed):
            return False
    return True


# -- artifacts ------------------------------------------------------------------

def write_run(out_dir, cfg: Config, res: RunResult) -> dict[str, Path]:
    """Write every run artifact; only ``timing.csv`` varies between identical runs."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    paths = {
        "container": d / "output.fpvl",
        "pixelation": d / "pixelation.csv",
        "emission": d / "emission.csv",
        "timing": d / "timing.csv",
        "refine": d / "refine.csv",
        "summary": d / "summary.json",
        "config": d / "config.txt",
    }
    write_frame_container(paths["container"], res.output)
    write_pixelation_log(paths["pixelation"], res.pixelation)
    with open(paths["emission"], "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["broadcast_frame", "frame", "record_complete_time", "process_deadline",
                     "broadcast_time"])
        for e in res.emission:
            wr.writerow([e.broadcast_frame_number, e.frame_index, f"{e.record_complete_time:.6f}",
                         f"{e.process_deadline:.6f}", f"{e.broadcast_time:.6f}"])
    with open(paths["timing"], "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["segment", "first_frame", "n_frames", "n_vectors", "iterations",
                     "converged", "seconds", "budget_seconds"])
        for t in res.timings:
            wr.writerow([t.segment, t.first_frame, t.n_frames, t.n_vectors, t.iterations,
                         int(t.converged), f"{t.seconds:.6f}", f"{cfg.segment_frames / cfg.fps:.6f}"])
    with open(paths["refine"], "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        cols = ["person_id", "first_frame", "length", "decision", "statistic", "reason"]
        wr.writerow(cols)
        for rl in res.refine_logs:
            row = rl.to_dict()
            wr.writerow([row[c] for c in cols])
    summary = {
        "frames": len(res.output),
        "segments": len(res.timings),
        "persons": sorted(res.trajectories),
        "streamers": sorted(res.streamers),
        "gap_frames": res.gap_count(),
        "refined_frames": sum(len(t.frames_with(Status.REFINED)) for t in res.trajectories.values()),
        "checks": res.checks,
        "continuity": res.verdict.label,
        "metrics": None if res.report is None else res.report.to_dict(),
    }
    paths["summary"].write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    paths["config"].write_text(cfg.dumps())
    if res.report is not None:
        paths["report"] = d / "report.json"
        paths["report"].write_text(res.report.to_json())
    return paths


def run_scenario(cfg: Config, scenario) -> RunResult:
    """Generate ``scenario`` and run the engine on it with ground truth attached."""
    from .provider import SyntheticProvider

    prov = SyntheticProvider(scenario)
    return run_pipeline(cfg, prov.output.stream, prov, prov.output.annotations)

