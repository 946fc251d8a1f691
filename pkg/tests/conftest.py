"""Collects acceptance outcomes and prints one verdict line per criterion."""

import pytest

_verdicts: dict[int, list[tuple[str, str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    report = outcome.get_result()
    if mark is None:
        return
    # a failing setup or teardown counts against the criterion too
    if report.when == "call" or report.outcome != "passed":
        _verdicts.setdefault(mark.args[0], []).append((item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_verdicts):
        failed = [name for name, outcome in _verdicts[n] if outcome == "failed"]
        skipped = [name for name, outcome in _verdicts[n] if outcome == "skipped"]
        line = f"criterion {n}: {'FAIL' if failed else 'PASS'}"
        if failed:
            line += f"  (failing: {', '.join(failed)})"
        if skipped:
            line += f"  (not run: {', '.join(skipped)})"
        terminalreporter.write_line(line)
