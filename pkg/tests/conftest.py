import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def sioux_path():
    path = os.environ.get("SIOUX_FALLS_TNTP")
    if not path or not Path(path).is_file():
        pytest.skip("set SIOUX_FALLS_TNTP to a TNTP net file")
    return path


_criteria: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _criteria[number] = (verdict, title, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        verdict, title, secs = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {verdict:4s} {title} ({secs:.2f} s)")
