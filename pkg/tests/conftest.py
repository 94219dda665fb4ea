import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CRITERIA: list[tuple[str, str, str]] = []


@pytest.fixture
def detail(request):
    """Attach a one-line summary to the acceptance report for this test."""

    def note(text):
        request.node.user_properties.append(("detail", str(text)))

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        notes = [v for k, v in item.user_properties if k == "detail"]
        status = "PASS" if rep.passed else "FAIL"
        _CRITERIA.append((status, marker.args[0], "; ".join(notes)))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, note in _CRITERIA:
        terminalreporter.write_line(f"{status}  {name}" + (f"  ({note})" if note else ""))
