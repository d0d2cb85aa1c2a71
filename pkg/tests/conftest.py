import numpy as np
import pytest

# criterion id -> (passed, details); filled by tests marked @pytest.mark.criterion
_CRITERIA: dict[str, tuple[bool, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid): test checks the named acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    cid = marker.args[0]
    ok, details = _CRITERIA.get(cid, (True, []))
    details = details + [v for k, v in item.user_properties if k == "detail"]
    if rep.failed and rep.when != "call":
        details.append(f"{rep.when} error")
    _CRITERIA[cid] = (ok and rep.passed, details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_CRITERIA, key=lambda c: int(c[1:])):
        ok, details = _CRITERIA[cid]
        terminalreporter.write_line(f"{cid} {'PASS' if ok else 'FAIL'}  {'; '.join(details)}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
