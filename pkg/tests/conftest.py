import os

import pytest

# acceptance criterion -> "PASS" / "FAIL" / "NOT RUN (...)"
ACCEPTANCE = {}
NOTES = {}


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    crit = None
    for kw in report.keywords:
        if kw.startswith("criterion_"):
            crit = kw
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        if report.skipped:
            reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else ""
            ACCEPTANCE.setdefault(crit, []).append(f"NOT RUN ({reason.replace('Skipped: ', '')})")
        elif report.passed:
            ACCEPTANCE.setdefault(crit, []).append("PASS")
        else:
            ACCEPTANCE.setdefault(crit, []).append("FAIL")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE, key=lambda c: int(c.split("_")[1])):
        outcomes = ACCEPTANCE[crit]
        if "FAIL" in outcomes:
            verdict = "FAIL"
        elif all(o == "PASS" for o in outcomes):
            verdict = "PASS"
        elif any(o == "PASS" for o in outcomes):
            verdict = "PARTIAL (" + "; ".join(sorted(set(o for o in outcomes if o != "PASS"))) + ")"
        else:
            verdict = sorted(set(outcomes))[0]
        tr.write_line(f"criterion {crit.split('_')[1]}: {verdict}")
        for line in NOTES.get(crit, []):
            tr.write_line(f"    {line}")


@pytest.fixture(scope="session")
def nslkdd_path():
    path = os.environ.get("NIDS_NSLKDD")
    if not path or not os.path.exists(path):
        pytest.skip("NSL-KDD training file not available; set NIDS_NSLKDD=/path/KDDTrain+.txt")
    return path


@pytest.fixture
def note(request):
    """Record a measured value under the test's criterion for the summary."""
    crit = next((m.name for m in request.node.iter_markers() if m.name.startswith("criterion_")), "other")

    def add(text):
        NOTES.setdefault(crit, []).append(text)

    return add


def pytest_configure(config):
    for i in range(1, 10):
        config.addinivalue_line("markers", f"criterion_{i}: acceptance criterion {i}")
