import pytest

_RESULTS_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion label")
    config.stash[_RESULTS_KEY] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(item.user_properties).get("detail", "")
        item.config.stash[_RESULTS_KEY].append((marker.args[0], report.outcome, detail))


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_RESULTS_KEY]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in results:
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}" + (f"  [{detail}]" if detail else ""))
