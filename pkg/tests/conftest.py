import pytest

ACCEPTANCE = {}


@pytest.fixture
def record():
    """Log one acceptance line; the terminal summary repeats them in order."""
    def _record(n, name, ok, detail=""):
        line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip()
        ACCEPTANCE[n] = line
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
