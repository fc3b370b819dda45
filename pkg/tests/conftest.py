import sys
import numpy as np
import pytest

from cuetrack import kernels


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run the test once per available kernel backend."""
    previous = kernels.backend_name()
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_boxes(rng, n, size=100.0, integer=False):
    """``n`` valid boxes inside a ``size`` x ``size`` canvas."""
    if integer:
        x1 = rng.integers(0, int(size) - 1, n)
        y1 = rng.integers(0, int(size) - 1, n)
        x2 = x1 + rng.integers(1, int(size) - x1 + 1)
        y2 = y1 + rng.integers(1, int(size) - y1 + 1)
        return np.stack([x1, y1, x2, y2], axis=1).astype(np.float64)
    p = rng.uniform(0, size, (n, 2, 2))
    lo, hi = p.min(axis=1), p.max(axis=1)
    hi = np.maximum(hi, lo + 1e-3)
    return np.concatenate([lo, hi], axis=1)


def truth_as_tracks(truth):
    """Ground truth replayed as tracker output: identity becomes track id."""
    from cuetrack.tracker import TrackFrame, TrackRecord

    return [TrackFrame(fid, [TrackRecord(r.identity, r.box.as_list(), r.class_id, 1.0, False)
                             for r in recs if r.visible])
            for fid, recs in zip(truth.frame_ids, truth.frames)]


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
