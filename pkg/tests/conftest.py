import random

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=150, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return random.Random(20240611)


# one summary line per acceptance criterion, keyed by the number in the test name
_criteria: dict[int, list] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid or "::test_criterion_" not in report.nodeid:
        return
    if report.when != "call" and not (report.failed or report.skipped):
        return
    number = int(report.nodeid.split("::test_criterion_")[1].split("_")[0])
    reason = ""
    if report.failed and hasattr(report.longrepr, "reprcrash"):
        reason = report.longrepr.reprcrash.message.splitlines()[0][:160]
    _criteria.setdefault(number, []).append((report.nodeid.split("::")[-1], report.outcome, reason))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        runs = _criteria[number]
        ok = all(outcome == "passed" for _, outcome, _ in runs)
        failed = [f"{name}: {reason}" for name, outcome, reason in runs if outcome != "passed"]
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({len(runs)} checks)"
        if failed:
            line += "; " + " | ".join(failed)
        terminalreporter.write_line(line)
