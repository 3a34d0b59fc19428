import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gazeact.core import FixationRecord, FixationSet, VideoMeta

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_set(rows, width=64, height=48, frames=100, fovea=4.0, videos=("v1",)):
    """FixationSet from (subject, video, start, end, x, y[, group]) tuples."""
    metas = {v: VideoMeta(v, width, height, frames, 25.0, fovea) for v in videos}
    recs = [FixationRecord(r[0], r[1], r[2], r[3], float(r[4]), float(r[5]), r[6] if len(r) > 6 else "active") for r in rows]
    return FixationSet(tuple(recs), metas)


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(name, ok, detail)."""

    def record(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _CRITERIA.append(line)
        print(line, flush=True)

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
