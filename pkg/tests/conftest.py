from pathlib import Path

import pytest

from qkdsim.scenario import load_scenario

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
REFERENCE = FIXTURES / "reference" / "scenario.yaml"


@pytest.fixture
def reference_scenario():
    return load_scenario(REFERENCE)


_criteria: list[tuple[str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        label = marker.args[0]
        callspec = getattr(item, "callspec", None)
        if callspec is not None:
            label += f" [{callspec.id}]"
        _criteria.append((label, "PASS" if report.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label, status in _criteria:
        terminalreporter.write_line(f"{status}  {label}")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")
