import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20200823)


# criterion number -> [title, passed, notes]
_CRITERIA = {}


@pytest.fixture
def note(request):
    """Attach a measured value to the summary line of the test's criterion."""
    marker = request.node.get_closest_marker("criterion")

    def add(text):
        if marker is not None:
            _CRITERIA.setdefault(marker.args[0], [marker.args[1], True, []])[2].append(text)

    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, [title, True, []])
    if report.failed or (report.when == "call" and not report.passed):
        entry[1] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, notes = _CRITERIA[number]
        detail = f" ({'; '.join(notes)})" if notes else ""
        terminalreporter.write_line(f"criterion {number} {'PASS' if passed else 'FAIL'}: {title}{detail}")
