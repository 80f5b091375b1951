import numpy as np
import pytest

from fpvls.config import Config
from fpvls.model import BBox, Status, read_frame_container
from fpvls.pipeline import (ConvergenceBudgetExceeded, pixel_fidelity, run_pipeline, run_scenario,
                            write_run)
from fpvls.provider import FileProvider, SyntheticProvider
from fpvls.synth import PersonSpec, Scenario, random_scenario, streamer_designation


def two_people(**kw):
    return Scenario(seed=3, n_frames=60, persons=[
        PersonSpec(0, (20, 30, 22, 22), (0.3, 0.0), is_streamer=True),
        PersonSpec(1, (100, 40, 20, 20), (-0.2, 0.1)),
    ], **kw)


def cfg_for(sc, **kw):
    return Config(segment_frames=20, streamer_bbox=streamer_designation(sc, 0), **kw)


def test_noiseless_two_people_end_to_end():
    sc = two_people()
    res = run_scenario(cfg_for(sc), sc)
    assert res.ok
    assert res.report.mfpa == 1.0 and res.report.opr == 0.0 and res.report.mp == 60
    assert len(res.streamers) == 1
    blurred = {pid for _, pid, _, _ in res.pixelation}
    assert blurred and not blurred & res.streamers
    prov = SyntheticProvider(sc)
    # the streamer's face is untouched in every frame
    for f in range(60):
        bb = prov.output.annotations[f][0].bbox
        x0, y0, x1, y1 = bb.clamp(sc.width, sc.height)
        assert np.array_equal(res.output.frames[f].pixels[y0:y1, x0:x1],
                              prov.output.stream.frames[f].pixels[y0:y1, x0:x1])


def test_occluded_face_gets_no_mosaic():
    sc = Scenario(seed=4, n_frames=60, persons=[
        PersonSpec(0, (20, 30, 22, 22), is_streamer=True),
        PersonSpec(1, (100, 40, 20, 20), (-0.2, 0.1), occlusions=[(25, 40)]),
    ])
    res = run_scenario(cfg_for(sc), sc)
    assert res.report.opr == 0.0
    assert not [f for f, _, _, _ in res.pixelation if 25 <= f < 40]


def test_refine_off_never_refines():
    sc = random_scenario(2, n_persons=3, n_frames=90, miss_rate=0.2)
    res = run_scenario(cfg_for(sc, refine=False), sc)
    assert res.checks["no_refined"]
    assert not any(t.frames_with(Status.REFINED) for t in res.trajectories.values())


def test_schedule_in_results():
    sc = two_people()
    res = run_scenario(cfg_for(sc), sc)
    assert [e.broadcast_frame_number for e in res.emission] == list(range(40, 100))
    assert len(res.timings) == 3 and res.verdict.continuous in (True, False)


def test_deterministic_container(tmp_path):
    sc = random_scenario(5, n_persons=3, n_frames=60, miss_rate=0.1)
    cfg = cfg_for(sc)
    a = write_run(tmp_path / "a", cfg, run_scenario(cfg, sc))
    b = write_run(tmp_path / "b", cfg, run_scenario(cfg, sc))
    for key in ("container", "pixelation", "report", "summary", "refine", "emission"):
        assert a[key].read_bytes() == b[key].read_bytes(), key
    out = read_frame_container(a["container"])
    assert len(out) == 60


def test_pixel_fidelity_detects_leaks():
    sc = two_people()
    prov = SyntheticProvider(sc)
    res = run_pipeline(cfg_for(sc), prov.output.stream, prov)
    boxes = res.outputs_by_frame()
    assert pixel_fidelity(prov.output.stream, res.output, boxes)
    assert not pixel_fidelity(prov.output.stream, res.output, {})


def test_provider_length_mismatch():
    sc = two_people()
    prov = SyntheticProvider(sc)
    longer = FileProvider(prov.output.detections, n_frames=100)
    with pytest.raises(ValueError):
        run_pipeline(Config(), prov.output.stream, longer)


def test_failure_budget():
    sc = random_scenario(1, n_persons=4, n_frames=60, miss_rate=0.1)
    cfg = Config(segment_frames=20, max_iters=2, failure_budget=0)
    with pytest.raises(ConvergenceBudgetExceeded):
        run_scenario(cfg, sc)


def test_without_designation_everyone_is_blurred():
    sc = two_people()
    res = run_scenario(Config(segment_frames=20), sc)
    assert not res.streamers
    assert res.report.totals["fp"] > 0


def test_designation_survives_missed_first_frame():
    sc = two_people()
    sc.persons[0].misses = [(0, 2)]
    res = run_scenario(cfg_for(sc), sc)
    assert len(res.streamers) == 1 and res.report.totals["fp"] == 0


def test_fixed_sigma_mode():
    sc = two_people()
    res = run_scenario(cfg_for(sc, blur_sigma_mode="fixed", blur_sigma=2.0), sc)
    assert res.ok
