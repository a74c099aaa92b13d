import pytest

# (criterion number, title, passed, detail) appended by test_acceptance.py
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    grouped = {}
    for num, title, passed, detail in ACCEPTANCE_RESULTS:
        grouped.setdefault(num, []).append((title, passed, detail))
    # one line per criterion; parametrized cases are joined and must all pass
    for num in sorted(grouped):
        parts = grouped[num]
        ok = all(p for _, p, _ in parts)
        text = " | ".join(f"{title}: {detail}" for title, _, detail in parts)
        terminalreporter.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {text}")


@pytest.fixture
def record_criterion():
    def _record(num, title, passed, detail):
        ACCEPTANCE_RESULTS.append((num, title, bool(passed), detail))
        return bool(passed)

    return _record
