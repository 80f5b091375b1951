import pytest

from fpvls.config import Config, ConfigError, apply_overrides, load_config, parse_config
from fpvls.model import BBox


def test_defaults():
    c = Config()
    assert (c.segment_frames, c.fps, c.damping, c.max_iters, c.stable_iters) == (150, 30, 0.5, 200, 10)
    assert (c.max_break, c.gap_dilation, c.hungarian_iou_floor, c.eval_iou_floor) == (5, 1.5, 0.1, 0.3)
    assert c.sigma is None


def test_roundtrip_through_text(tmp_path):
    c = Config(streamer_bbox=BBox(1, 2, 3, 4), refine=False, elr_threshold_override=5.0)
    p = tmp_path / "c.txt"
    p.write_text(c.dumps())
    assert load_config(p) == c


def test_comments_and_types():
    c = parse_config("# run\nsegment_frames = 60  # shorter\nrefine = off\nblur_sigma_mode=fixed\n")
    assert c.segment_frames == 60 and c.refine is False and c.sigma == 4.0


@pytest.mark.parametrize("text", ["bogus = 1", "segment_frames = x", "damping = 1.5",
                                  "no equals sign", "streamer_bbox = 1,2,3"])
def test_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_overrides():
    c = apply_overrides(Config(), ["fps=25", "streamer_bbox=0,0,5,5"])
    assert c.fps == 25 and c.streamer_bbox == BBox(0, 0, 5, 5)
