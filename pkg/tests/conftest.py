import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xviewgeo.geo import GpsCoord, LocalXY, unproject
from xviewgeo.retrieval import BuildingRecord

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ORIGIN = GpsCoord(40.4406, -79.9959)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def make_record(rid, view, emb, x=0.0, y=0.0, image_id=None, heading=0):
    gps = unproject(LocalXY(x, y, ORIGIN))
    return BuildingRecord(rid, view, image_id or f"img-{rid}", heading, gps, embedding=unit(emb))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record_criterion(name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[name] = (bool(passed), detail)
    print(f"{name}: {'PASS' if passed else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[1].rstrip("ab")), s)):
        passed, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name}: {'PASS' if passed else 'FAIL'} - {detail}")
