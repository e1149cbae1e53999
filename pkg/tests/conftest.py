import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        num, title = mark.args
        entry = _RESULTS.setdefault(num, {"title": title, "ok": True, "failed": []})
        if rep.outcome != "passed":
            entry["ok"] = False
            entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_RESULTS):
        e = _RESULTS[num]
        status = "PASS" if e["ok"] else "FAIL"
        extra = "" if e["ok"] else f"  (failing: {', '.join(e['failed'])})"
        tr.write_line(f"criterion {num:2d}: {status}  {e['title']}{extra}")
