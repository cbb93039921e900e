import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from perspdeform import _accel
from perspdeform.geometry import Geometry

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

BACKENDS = ["numba", "numpy"] if _accel.HAVE_NUMBA else ["numpy"]


@pytest.fixture
def virtual_geom():
    """Small virtual detector (d_sd == d_si), 1 mm pixels, centered principal point."""
    return Geometry(750.0, 750.0, 128, 128, 1.0, 1.0, 63.5, 63.5)


@pytest.fixture
def physical_geom():
    return Geometry(1200.0, 750.0, 1240, 960, 0.308, 0.308, 619.5, 479.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=BACKENDS)
def each_backend(request):
    with _accel.use_backend(request.param):
        yield request.param


# --------------------------------------------------------------------------
# acceptance report: one line per criterion in the terminal summary
# --------------------------------------------------------------------------

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config.addinivalue_line("markers", "slow: full-resolution runs (deselect with -m \"not slow\")")


@pytest.fixture
def measured(request):
    """Dict a criterion test fills with what it measured (shown in the report)."""
    marker = request.node.get_closest_marker("criterion")
    entry = _CRITERIA.setdefault(marker.args[0], {"detail": {}, "outcomes": []}) if marker else {"detail": {}}
    return entry["detail"]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        entry = _CRITERIA.setdefault(marker.args[0], {"detail": {}, "outcomes": []})
        entry["outcomes"].append(rep.outcome)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        entry = _CRITERIA[n]
        outs = entry["outcomes"]
        status = "PASS" if outs and all(o == "passed" for o in outs) else "FAIL"
        detail = "; ".join(f"{k}={_fmt(v)}" for k, v in entry["detail"].items())
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}")
