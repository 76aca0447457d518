import pytest

_RESULTS: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.fixture
def detail(request):
    """Collects human-readable numbers for the criterion summary line."""
    notes: list[str] = []
    request.node.criterion_notes = notes
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    number, title = mark.args
    notes = "; ".join(getattr(item, "criterion_notes", []))
    _RESULTS[number] = ("PASS" if report.passed else "FAIL", title, notes)
    line = f"criterion {number:>2}: {_RESULTS[number][0]}  {title}  [{notes}]"
    item.config.get_terminal_writer().line()
    item.config.get_terminal_writer().line(line)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title, notes = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}  [{notes}]")
