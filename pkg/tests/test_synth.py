import numpy as np
import pytest

from fpvls.synth import (PersonSpec, Scenario, box_path, identity_centers, load_scenario,
                         random_scenario, save_scenario, streamer_designation, synth_generate)


def scenario(**kw):
    persons = [PersonSpec(0, (10, 10, 20, 20), is_streamer=True),
               PersonSpec(1, (60, 40, 16, 16), (0.5, 0.2), occlusions=[(5, 10)], misses=[(12, 15)])]
    return Scenario(seed=3, persons=persons, n_frames=30, **kw)


def test_centers_respect_separation():
    c = identity_centers(np.random.default_rng(0), 6, 64, 0.3)
    g = c @ c.T
    assert np.all(g[~np.eye(6, dtype=bool)] < 0.3)


def test_box_path_reflects_inside_frame():
    p = PersonSpec(0, (0, 0, 10, 10), (7.0, 3.0))
    for bb in box_path(p, 50, 40, 100).values():
        assert 0 <= bb.x <= 40 and 0 <= bb.y <= 30


def test_occlusion_flagged_and_undetected():
    out = synth_generate(scenario())
    for t in range(5, 10):
        ann = {a.person_id: a for a in out.annotations[t]}
        assert ann[1].over_pixelation
        assert 1 not in out.truth.get(t, [])


def test_miss_window_yields_true_candidate():
    out = synth_generate(scenario())
    for t in range(12, 15):
        assert 1 not in out.truth[t]
        assert len(out.candidates[t]) >= 3  # true face plus one background per person


def test_generation_is_deterministic():
    a, b = synth_generate(scenario()), synth_generate(scenario())
    assert all(np.array_equal(x.pixels, y.pixels) for x, y in zip(a.stream, b.stream))
    assert a.truth == b.truth


def test_duplicate_person_ids_rejected():
    with pytest.raises(ValueError):
        Scenario(seed=0, persons=[PersonSpec(1, (0, 0, 5, 5)), PersonSpec(1, (9, 9, 5, 5))])


def test_scenario_file_roundtrip(tmp_path):
    sc = scenario(miss_rate=0.1)
    save_scenario(tmp_path / "s.json", sc)
    back = load_scenario(tmp_path / "s.json")
    assert back == sc


def test_scenario_file_needs_seed(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{"persons": []}')
    with pytest.raises(ValueError):
        load_scenario(p)


def test_streamer_designation():
    sc = random_scenario(1, n_persons=2)
    assert streamer_designation(sc, 0) == box_path(sc.persons[0], sc.width, sc.height,
                                                   sc.n_frames)[0]
    assert streamer_designation(random_scenario(1, streamer=False)) is None
