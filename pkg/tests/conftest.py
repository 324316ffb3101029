"""Prints one pass/fail line per acceptance criterion at the end of a run."""

_results = {}


def _number(nodeid):
    return int(nodeid.split("[C")[1].rstrip("]"))


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion" not in report.nodeid:
        return
    if report.when != "call" and not (report.failed or report.skipped):
        return
    crash = getattr(report.longrepr, "reprcrash", None)
    message = crash.message.splitlines()[0] if crash else "failed"
    if hasattr(report, "wasxfail") and report.skipped:
        line = ("FAIL", f"{message} (expected failure: {report.wasxfail})")
    elif report.failed:
        line = ("FAIL", message)
    elif report.skipped:
        line = ("SKIP", "skipped")
    else:
        line = ("PASS", dict(report.user_properties).get("detail", ""))
    _results.setdefault(_number(report.nodeid), line)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    from test_acceptance import CRITERIA

    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        tag, detail = _results[number]
        terminalreporter.write_line(f"[{tag}] C{number} {CRITERIA[number][0]}: {detail}")
