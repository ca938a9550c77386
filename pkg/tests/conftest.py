import re

_CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_c(\d+)_", report.nodeid)
    if not m or (report.when != "call" and not (report.when == "setup" and report.outcome != "passed")):
        return
    n = int(m.group(1))
    if hasattr(report, "wasxfail"):
        state = "XFAIL"
    else:
        state = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
    detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
    prev = _CRITERIA.get(n)
    rank = {"PASS": 0, "SKIP": 1, "XFAIL": 2, "FAIL": 3}
    if prev is None or rank[state] >= rank[prev[0]]:
        _CRITERIA[n] = (state, detail if prev is None or not prev[1] else f"{prev[1]}; {detail}".strip("; "))
    elif detail:
        _CRITERIA[n] = (prev[0], f"{prev[1]}; {detail}".strip("; "))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        state, detail = _CRITERIA[n]
        tr.write_line(f"criterion {n:2d}: {state}" + (f"  ({detail})" if detail else ""))
