import pytest

ACCEPTANCE = []


def record(name, ok, detail=""):
    """Store one acceptance line; printed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE.append(line)
    print(line)
    return ok


@pytest.fixture
def accept():
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
