"""Gaussian-blur mosaics over non-streamer trajectory boxes.

The kernel is quantized to 16-bit fixed point and both passes accumulate in
integers, so output bytes do not depend on the platform's float rounding.
"""
from __future__ import annotations

import math
import warnings
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import RENDERED, BBox, Frame, FrameStream, Trajectory, iou

KERNEL_BITS = 16
DESIGNATION_IOU = 0.3


def auto_sigma(bbox: BBox) -> float:
    return max(bbox.w, bbox.h) / 6.0


def kernel_radius(sigma: float) -> int:
    return int(math.ceil(3.0 * sigma))


def fixed_kernel(sigma: float, radius: int) -> np.ndarray:
    """Integer Gaussian weights summing to exactly ``2**KERNEL_BITS``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if radius < 0:
        raise ValueError("radius must be non-negative")
    k = np.arange(-radius, radius + 1, dtype=float)
    w = np.exp(-k * k / (2.0 * sigma * sigma))
    w /= w.sum()
    q = np.rint(w * (1 << KERNEL_BITS)).astype(np.int64)
    q[radius] += (1 << KERNEL_BITS) - int(q.sum())
    return q


def _pass(region: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    n = region.shape[axis]
    idx = np.clip(np.arange(n)[:, None] + np.arange(-radius, radius + 1)[None, :], 0, n - 1)
    taken = np.take(region, idx, axis=axis)  # the new kernel axis lands right after `axis`
    return np.tensordot(taken, kernel, axes=([axis + 1], [0]))


def gaussian_blur_region(frame: np.ndarray, bbox: BBox, sigma: float | None = None,
                         radius: int | None = None, source: np.ndarray | None = None) -> np.ndarray:
    """Blur ``bbox`` of ``frame`` in place and return it.

    Samples come from ``source`` (default: a copy of ``frame``), never from
    pixels this call has written. Sampling clamps to the edge of the clamped
    region, so no pixel outside the box is read or written.
    """
    h, w = frame.shape[:2]
    span = bbox.clamp(w, h)
    if span is None:
        return frame
    sigma = auto_sigma(bbox) if sigma is None else sigma
    radius = kernel_radius(sigma) if radius is None else radius
    kern = fixed_kernel(sigma, radius)
    x0, y0, x1, y1 = span
    src = frame if source is None else source
    region = src[y0:y1, x0:x1].astype(np.int64)
    tmp = _pass(region, kern, axis=1)      # scaled by 2**16
    acc = _pass(tmp, kern, axis=0)         # scaled by 2**32
    half = 1 << (2 * KERNEL_BITS - 1)
    frame[y0:y1, x0:x1] = np.clip((acc + half) >> (2 * KERNEL_BITS), 0, 255).astype(np.uint8)
    return frame


def designate_streamer(trajectories: Mapping[int, Trajectory], designation: BBox | None,
                       frame: int, iou_floor: float = DESIGNATION_IOU,
                       window: int = 0) -> set[int]:
    """Person whose box at ``frame`` best overlaps the designation box.

    Ties go to the lower person id. A streamer whose face was missed on the
    designation frame has no box there, so frames up to ``window`` away are
    tried next, nearest first (earlier before later). Returns an empty set,
    with a warning, when nobody reaches ``iou_floor``.
    """
    if designation is None:
        return set()
    offsets = [0] + [s * d for d in range(1, window + 1) for s in (-1, 1)]
    for off in offsets:
        best, best_iou = None, -1.0
        for pid in sorted(trajectories):
            bb = trajectories[pid].box_at(frame + off)
            if bb is None:
                continue
            v = iou(bb, designation)
            if v > best_iou:
                best, best_iou = pid, v
        if best is not None and best_iou >= iou_floor:
            return {best}
    warnings.warn(f"no trajectory overlaps the streamer designation near frame {frame} "
                  f"with IoU >= {iou_floor}; every face will be pixelated", stacklevel=2)
    return set()


def boxes_to_blur(trajectories: Iterable[Trajectory], streamers: set[int],
                  n_frames: int) -> dict[int, list[tuple[int, BBox]]]:
    out: dict[int, list[tuple[int, BBox]]] = {}
    for traj in sorted(trajectories, key=lambda t: t.person_id):
        if traj.is_streamer or traj.person_id in streamers:
            continue
        for f in sorted(traj.entries):
            e = traj.entries[f]
            if e.status not in RENDERED:
                continue
            if not 0 <= f < n_frames:
                raise IndexError(f"trajectory {traj.person_id} references frame {f} "
                                 f"outside a {n_frames}-frame stream")
            out.setdefault(f, []).append((traj.person_id, e.bbox))
    return out


def render_frame(frame: Frame, boxes: Sequence[tuple[int, BBox]], sigma: float | None = None) -> Frame:
    if not boxes:
        return frame
    out = frame.pixels.copy()
    for _, bb in boxes:
        gaussian_blur_region(out, bb, sigma, source=frame.pixels)
    return Frame(frame.index, out)


def render_stream(stream: FrameStream, trajectories: Iterable[Trajectory],
                  streamers: set[int] = frozenset(), sigma: float | None = None) -> FrameStream:
    """Blur every rendered non-streamer entry; ``sigma=None`` sizes it per box."""
    plan = boxes_to_blur(trajectories, set(streamers), len(stream))
    frames = [render_frame(fr, plan.get(i, ()), sigma) for i, fr in enumerate(stream.frames)]
    return FrameStream(stream.width, stream.height, stream.fps, frames)
