"""Report figures. Uses the Agg backend; every function writes one file."""
from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402

from .model import Status, Trajectory  # noqa: E402

STATUS_COLORS = {
    Status.DETECTED: "tab:blue",
    Status.INTERPOLATED: "tab:orange",
    Status.REFINED: "tab:green",
    Status.GAP: "lightgrey",
}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep(rows: Sequence[Mapping], path) -> None:
    """Accuracy, leftover gaps and per-segment processing time against segment length.

    The accuracy axis is scaled to the data, since differences between
    segment lengths are usually in the third decimal.
    """
    ns = [r["segment_frames"] for r in rows]
    fig, (ax, gx, bx) = plt.subplots(1, 3, figsize=(12, 3.6))
    for key, marker in (("mfpa", "o"), ("mfpp", "s")):
        ys = [r[key] if r[key] is not None else float("nan") for r in rows]
        ax.plot(ns, ys, marker=marker, label=key.upper())
    ax.set_ylabel("metric")
    ax.yaxis.grid(True)
    ax.legend()
    gx.plot(ns, [r["gap_frames"] for r in rows], marker="o", color="tab:gray")
    gx.set_ylabel("gap frames")
    gx.set_ylim(bottom=0)
    gx.yaxis.set_major_locator(MaxNLocator(integer=True))
    bx.plot(ns, [r["mean_segment_seconds"] for r in rows], marker="o", label="mean processing")
    bx.plot(ns, [r["budget_seconds"] for r in rows], ls="--", color="k", label="budget N/FPS")
    bx.set_ylabel("seconds per segment")
    bx.set_yscale("log")
    bx.legend()
    for a in (ax, gx, bx):
        a.set_xlabel("segment length N (frames)")
        a.set_xticks(ns)
    _save(fig, path)


def plot_trajectories(trajectories: Mapping[int, Trajectory], n_frames: int, path,
                      streamers: set[int] = frozenset()) -> None:
    """One row per person; each frame colored by entry status."""
    pids = sorted(trajectories)
    fig, ax = plt.subplots(figsize=(9, 0.5 + 0.45 * max(1, len(pids))))
    for row, pid in enumerate(pids):
        for status, color in STATUS_COLORS.items():
            fs = trajectories[pid].frames_with(status)
            if fs:
                ax.broken_barh([(f, 1) for f in fs], (row - 0.35, 0.7), color=color)
    ax.set_yticks(range(len(pids)))
    ax.set_yticklabels([f"{p} (streamer)" if p in streamers else str(p) for p in pids])
    ax.set_xlim(0, max(1, n_frames))
    ax.set_xlabel("frame")
    ax.set_ylabel("person")
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in STATUS_COLORS.values()]
    ax.legend(handles, [s.value for s in STATUS_COLORS], ncol=4, loc="lower center",
              bbox_to_anchor=(0.5, 1.0), frameon=False)
    _save(fig, path)


def plot_timing(seconds: Sequence[float], budget: float, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.bar(range(len(seconds)), seconds, color="tab:blue")
    ax.axhline(budget, ls="--", color="k", label="budget N/FPS")
    ax.set_xlabel("segment")
    ax.set_ylabel("seconds")
    ax.legend()
    _save(fig, path)
