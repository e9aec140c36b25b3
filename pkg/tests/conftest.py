import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_SESSION_START = time.perf_counter()
_CRITERIA = {}


@pytest.fixture
def tmp_out(tmp_path):
    return tmp_path / "out"


@pytest.fixture
def session_elapsed():
    """Seconds since the test session started."""
    return lambda: time.perf_counter() - _SESSION_START


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_collection_modifyitems(items):
    # the runtime criterion times the whole session, so it goes last
    last = [i for i in items if (m := i.get_closest_marker("criterion")) and m.args[0] == 10]
    items[:] = [i for i in items if i not in last] + last


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None or (rep.when != "call" and not rep.failed):
        return
    number, title = m.args
    prev = _CRITERIA.get(number, (True, title))[0]
    _CRITERIA[number] = (prev and not rep.failed, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, title = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}")
