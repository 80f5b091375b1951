import numpy as np
import pytest

from fpvls.model import BBox, Candidate, FaceVector, Frame, FrameStream


def make_stream(n_frames=4, width=16, height=12, fps=30, seed=0):
    rng = np.random.default_rng(seed)
    frames = [Frame(i, rng.integers(0, 256, (height, width, 3), dtype=np.uint8))
              for i in range(n_frames)]
    return FrameStream(width, height, fps, frames)


def face(frame, x=0.0, y=0.0, w=10.0, h=10.0, emb=None, feat=None, dim=8):
    emb = np.eye(dim)[0] if emb is None else np.asarray(emb, float)
    feat = np.zeros(32) if feat is None else np.asarray(feat, float)
    return FaceVector(frame, BBox(x, y, w, h), 0.95, emb / np.linalg.norm(emb), feat)


def cand(frame, x=0.0, y=0.0, w=10.0, h=10.0, score=0.9, feat=None):
    return Candidate(frame, BBox(x, y, w, h), score, np.zeros(32) if feat is None else feat)


@pytest.fixture
def stream():
    return make_stream()


# -- acceptance summary ---------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not mark.args:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        number, title = mark.args
        detail = dict(item.user_properties).get("detail", "")
        _CRITERIA[number] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, verdict, detail = _CRITERIA[number]
        line = f"{verdict} {number:>2}. {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
