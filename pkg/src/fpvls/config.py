"""Run configuration: a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored. Unknown keys are an error so a
typo cannot silently fall back to a default.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .model import BBox


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    # inputs
    input: str = ""
    scenario: str = ""
    detections: str = ""
    candidates: str = ""
    annotations: str = ""
    provider: str = "synthetic"  # synthetic | file
    embedding_dim: int = 512
    # segmentation
    segment_frames: int = 150
    fps: int = 30
    # clustering
    damping: float = 0.5
    max_iters: int = 200
    stable_iters: int = 10
    eviction_segments: int = 10
    min_cluster_support: int = 3
    failure_budget: int = 10
    # trajectories
    max_break: int = 5
    gap_dilation: float = 1.5
    # refinement
    refine: bool = True
    elr_confidence: float = 0.95
    elr_threshold_override: float | None = None
    hungarian_iou_floor: float = 0.1
    min_candidate_len: int = 2
    nms_iou: float = 0.7
    # rendering
    blur_sigma_mode: str = "auto"  # auto | fixed
    blur_sigma: float = 4.0
    streamer_bbox: BBox | None = None
    streamer_frame: int = 0
    # evaluation
    eval_iou_floor: float = 0.3
    # emission
    realtime: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.segment_frames < 1:
            raise ConfigError("segment_frames must be >= 1")
        if self.fps <= 0:
            raise ConfigError("fps must be positive")
        if not 0 <= self.damping < 1:
            raise ConfigError("damping must lie in [0, 1)")
        if self.provider not in ("synthetic", "file"):
            raise ConfigError(f"unknown provider {self.provider!r}")
        if self.blur_sigma_mode not in ("auto", "fixed"):
            raise ConfigError(f"blur_sigma_mode must be auto or fixed, got {self.blur_sigma_mode!r}")
        if self.blur_sigma_mode == "fixed" and not self.blur_sigma > 0:
            raise ConfigError("blur_sigma must be positive")
        if not 0 < self.elr_confidence < 1:
            raise ConfigError("elr_confidence must lie in (0, 1)")
        if self.max_break < 0:
            raise ConfigError("max_break must be >= 0")
        if self.gap_dilation < 1:
            raise ConfigError("gap_dilation must be >= 1")

    @property
    def sigma(self) -> float | None:
        return self.blur_sigma if self.blur_sigma_mode == "fixed" else None

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(Config)}


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "on" if v else "off"
    if isinstance(v, BBox):
        return ",".join(repr(float(c)) for c in v.as_tuple())
    return str(v)


def _parse(key: str, raw: str):
    kind = _TYPES[key]
    raw = raw.strip()
    try:
        if raw.lower() in ("none", "") and "None" in kind:
            return None
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
        if kind.startswith("BBox"):
            parts = [float(p) for p in raw.replace(" ", "").split(",")]
            if len(parts) != 4:
                raise ValueError("expected x,y,w,h")
            return BBox(*parts)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc


def parse_config(text: str, base: Config | None = None) -> Config:
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        values[key] = _parse(key, raw)
    return dataclasses.replace(base or Config(), **values)


def load_config(path) -> Config:
    return parse_config(Path(path).read_text())


def apply_overrides(cfg: Config, pairs: list[str]) -> Config:
    """Apply ``key=value`` strings from the command line."""
    return parse_config("\n".join(pairs), cfg)
