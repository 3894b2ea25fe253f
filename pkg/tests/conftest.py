import pytest

ACCEPTANCE_LINES: list[str] = []


class Criterion:
    """Label for one acceptance criterion; the report hook turns it into a PASS/FAIL line."""

    def __init__(self):
        self.name = None
        self.detail = ""

    def __call__(self, number: int, title: str) -> "Criterion":
        self.name = f"criterion {number}: {title}"
        return self


@pytest.fixture
def criterion():
    return Criterion()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    crit = getattr(item, "funcargs", {}).get("criterion")
    if crit is None or crit.name is None:
        return
    line = f"{'PASS' if report.passed else 'FAIL'} {crit.name}"
    if crit.detail:
        line += f" [{crit.detail}]"
    ACCEPTANCE_LINES.append(line)
    print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
