"""Command line entry point: ``fpvls <subcommand>``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import Config, ConfigError, apply_overrides, load_config
from .elr import two_sample_test
from .evaluator import evaluate, read_pixelation_log
from .model import (FEAT_DIM, FormatError, read_annotations, read_detections, read_frame_container,
                    write_annotations, write_candidates, write_detections, write_frame_container)
from .piap import PIAP
from .provider import FileProvider, SyntheticProvider
from .synth import (load_scenario, random_scenario, save_scenario, streamer_designation,
                    synth_generate)

log = logging.getLogger("fpvls")

SWEEP_LENGTHS = (30, 60, 90, 120, 150)


def _config(args) -> Config:
    cfg = load_config(args.config) if getattr(args, "config", None) else Config()
    return apply_overrides(cfg, list(getattr(args, "set", None) or []))


def _scenario(args):
    if getattr(args, "scenario", None):
        return load_scenario(args.scenario)
    return random_scenario(args.seed, n_persons=args.persons, n_frames=args.frames,
                           miss_rate=args.miss_rate)


def _add_scenario_args(p) -> None:
    p.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--seed", type=int, default=0, help="seed for a random scenario")
    p.add_argument("--persons", type=int, default=3)
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--miss-rate", type=float, default=0.05)


def cmd_run(args) -> int:
    from .pipeline import run_pipeline, write_run
    from .plotting import plot_timing, plot_trajectories

    cfg = _config(args)
    if args.refine is not None:
        cfg = cfg.replace(refine=args.refine == "on")
    if args.scenario:
        cfg = cfg.replace(scenario=args.scenario)
    if cfg.scenario or cfg.provider == "synthetic" and not cfg.input:
        sc = load_scenario(cfg.scenario) if cfg.scenario else random_scenario(args.seed)
        prov = SyntheticProvider(sc)
        stream, anns = prov.output.stream, prov.output.annotations
        if cfg.streamer_bbox is None and args.designate_from_scenario:
            cfg = cfg.replace(streamer_bbox=streamer_designation(sc, cfg.streamer_frame))
    else:
        if not (cfg.input and cfg.detections):
            raise ConfigError("file mode needs input and detections")
        stream = read_frame_container(cfg.input)
        prov = FileProvider.from_files(cfg.detections, cfg.candidates or None,
                                       cfg.embedding_dim, len(stream))
        anns = read_annotations(cfg.annotations) if cfg.annotations else None
    res = run_pipeline(cfg, stream, prov, anns)
    paths = write_run(args.out, cfg, res)
    if args.figures:
        out = Path(args.out)
        plot_trajectories(res.trajectories, len(stream), out / "trajectories.png", res.streamers)
        plot_timing([t.seconds for t in res.timings], cfg.segment_frames / cfg.fps,
                    out / "timing.png")
    for name, ok in sorted(res.checks.items()):
        if not ok:
            log.error("self-check failed: %s", name)
    log.info("continuity: %s", res.verdict.label)
    print(paths.get("report", paths["summary"]))
    return 0 if res.ok else 1


def cmd_cluster(args) -> int:
    cfg = _config(args)
    dets = read_detections(args.detections, cfg.embedding_dim)
    piap = PIAP(cfg.embedding_dim, cfg.damping, cfg.max_iters, cfg.stable_iters,
                cfg.eviction_segments)
    n = cfg.segment_frames
    last = max(dets) if dets else -1
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        wr = csv.writer(out, lineterminator="\n")
        wr.writerow(["frame", "index", "person_id"])
        for q, start in enumerate(range(0, last + 1, n)):
            seg = [(f, i, fv) for f in sorted(dets) if start <= f < start + n
                   for i, fv in enumerate(dets[f])]
            res = piap.cluster_segment([fv for _, _, fv in seg], q)
            for (f, i, _), pid in zip(seg, res.person_ids):
                wr.writerow([f, i, pid])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _load_sample(path) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    if arr.shape[1] != FEAT_DIM:
        raise FormatError(f"{path}: expected {FEAT_DIM} columns, got {arr.shape[1]}")
    return arr


def cmd_elr_test(args) -> int:
    x, y = _load_sample(args.x), _load_sample(args.y)
    n = min(len(x), len(y))
    res = two_sample_test(x[:n], y[:n], args.confidence, args.threshold)
    print(json.dumps(res.to_dict(), sort_keys=True, indent=2))
    return 0


def cmd_synth(args) -> int:
    sc = _scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    so = synth_generate(sc)
    save_scenario(out / "scenario.json", sc)
    write_frame_container(out / "input.fpvl", so.stream)
    write_detections(out / "detections.jsonl", [fv for f in sorted(so.detections)
                                                for fv in so.detections[f]])
    write_candidates(out / "candidates.jsonl", [c for f in sorted(so.candidates)
                                                for c in so.candidates[f]])
    write_annotations(out / "annotations.csv", so.annotations)
    print(out)
    return 0


def cmd_eval(args) -> int:
    outputs = read_pixelation_log(args.pixelation)
    anns = read_annotations(args.annotations)
    rep = evaluate(outputs, anns, args.frames, args.iou_floor)
    text = rep.to_json()
    if args.out:
        Path(args.out).write_text(text)
        print(args.out)
    else:
        sys.stdout.write(text)
    return 0


def sweep(cfg: Config, scenario, lengths=SWEEP_LENGTHS) -> list[dict]:
    from .pipeline import run_pipeline

    prov = SyntheticProvider(scenario)
    if cfg.streamer_bbox is None:
        cfg = cfg.replace(streamer_bbox=streamer_designation(scenario, cfg.streamer_frame))
    rows = []
    for n in lengths:
        c = cfg.replace(segment_frames=n)
        res = run_pipeline(c, prov.output.stream, prov, prov.output.annotations)
        rep = res.report
        secs = [t.seconds for t in res.timings]
        rows.append({
            "segment_frames": n,
            "mfpa": rep.mfpa, "mfpp": rep.mfpp, "opr": rep.opr, "mp": rep.mp,
            "gap_frames": res.gap_count(),
            "mean_segment_seconds": float(np.mean(secs)) if secs else 0.0,
            "budget_seconds": n / c.fps,
            "continuity": res.verdict.label,
        })
    return rows


def cmd_sweep(args) -> int:
    from .plotting import plot_sweep

    cfg = _config(args)
    sc = _scenario(args)
    lengths = [int(v) for v in args.lengths.split(",")]
    rows = sweep(cfg, sc, lengths)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: ("" if v is None else v) for k, v in r.items()})
    plot_sweep(rows, out / "sweep.png")
    print(out / "sweep.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fpvls", description="Face pixelation for live video streams")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="pixelate a stream")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--scenario", help="synthetic scenario JSON")
    p.add_argument("--seed", type=int, default=0, help="random scenario seed when none is given")
    p.add_argument("--refine", choices=("on", "off"))
    p.add_argument("--designate-from-scenario", action="store_true",
                   help="use the scenario's streamer box as the designation")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")
    p.add_argument("--out", default="run_out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("cluster", help="cluster an embedding file segment by segment")
    p.add_argument("detections")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("elr-test", help="two-sample test on feat32 CSV files")
    p.add_argument("x")
    p.add_argument("y")
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_elr_test)

    p = sub.add_parser("synth", help="generate a synthetic scenario and its artifacts")
    _add_scenario_args(p)
    p.add_argument("--out", default="synth_out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score a pixelation log against annotations")
    p.add_argument("pixelation")
    p.add_argument("annotations")
    p.add_argument("--frames", type=int)
    p.add_argument("--iou-floor", type=float, default=0.3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="metrics across segment lengths")
    _add_scenario_args(p)
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--lengths", default=",".join(map(str, SWEEP_LENGTHS)))
    p.add_argument("--out", default="sweep_out")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, FormatError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
