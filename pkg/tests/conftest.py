import pytest

# criterion id -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(key, passed, detail):
        ACCEPTANCE[key] = (bool(passed), detail)
        line = f"{'PASS' if passed else 'FAIL'} {key}: {detail}"
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    def order(key):
        return [(0, int(p), "") if p.isdigit() else (1, 0, p) for p in key.split()]

    for key in sorted(ACCEPTANCE, key=order):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {key}: {detail}")
