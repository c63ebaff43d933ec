import pytest

_CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion: ``criterion(n, passed, detail)``.

    Each test records before it asserts, so the terminal summary shows the
    measured numbers for failing criteria too. A criterion split over several
    tests passes only if every part does.
    """

    def record(n: int, passed: bool, detail: str):
        prev = _CRITERIA.get(n)
        if prev is None:
            _CRITERIA[n] = (bool(passed), [detail])
        else:
            _CRITERIA[n] = (prev[0] and bool(passed), prev[1] + [detail])

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        passed, details = _CRITERIA[n]
        terminalreporter.write_line(
            f"criterion {n:2d}: {'PASS' if passed else 'FAIL'} - {'; '.join(details)}")
