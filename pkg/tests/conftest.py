import pytest

CRITERIA = {
    1: "gauge oracle round trip",
    2: "decay envelope for the Biot-Savart gauge",
    3: "spinor algebra",
    4: "factorization identity O(h^2)",
    5: "sphere-norm derivative identity O(h^2)",
    6: "zero-mode pipeline",
    7: "eigensolver vs dense oracle",
    8: "bootstrap and envelope coefficients",
    9: "radial ODE and decay exponents",
    10: "deterministic quotient artifact",
}

_results = {}


@pytest.fixture
def record():
    """``record(criterion, part, passed, detail)`` stores one checked part."""

    def _record(criterion, part, passed, detail=""):
        _results.setdefault(criterion, []).append((part, bool(passed), detail))
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k, title in CRITERIA.items():
        parts = _results.get(k)
        if parts is None:
            tr.write_line(f"criterion {k:>2} FAIL  {title}: not run")
            continue
        ok = all(p for _, p, _ in parts)
        tr.write_line(f"criterion {k:>2} {'PASS' if ok else 'FAIL'}  {title}")
        for part, p, detail in parts:
            tr.write_line(f"      {'ok  ' if p else 'FAIL'} {part}: {detail}")
