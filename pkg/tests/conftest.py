import numpy as np
import pytest

from tsan.data import SplitSpec, preprocess, synth_generate


@pytest.fixture(scope="session")
def synth_pp():
    """Preprocessed synthetic train/validation/test windows (w=5, s=2)."""
    train = synth_generate(2000, 0.5, seed=1)
    test = synth_generate(2000, 0.5, seed=2)
    return preprocess(train, test, 5, 2, SplitSpec(0.2, True, 0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance criterion reporting --------------------------------------------

_CRITERIA: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    item_marker = getattr(report, "criterion", None)
    if item_marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        detail = ""
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2]
        _CRITERIA[item_marker] = (status, detail)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, (status, detail) in _CRITERIA.items():
        line = f"{status}  {name}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
