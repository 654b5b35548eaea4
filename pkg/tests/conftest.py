import re

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    failed = report.failed
    if report.when == "call" or (failed and key not in _ACCEPTANCE):
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE[key] = ("FAIL" if failed else "PASS", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        verdict, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"{verdict} criterion {key:2d}: {detail}")
