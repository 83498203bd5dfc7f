import numpy as np
import pytest

from hjdefect.effective_ham import tabulate
from hjdefect.scalar_fields import HamiltonianSpec, cos2_bump, norm_kinetic, sin_cost, zero_cost


def separable(per, defect=None, kinetic=None):
    return HamiltonianSpec(per, defect, kinetic=kinetic or norm_kinetic(per.dim))


@pytest.fixture(scope="session")
def flat_spec():
    return separable(zero_cost(), cos2_bump())


@pytest.fixture(scope="session")
def sin_spec():
    return separable(sin_cost(), cos2_bump())


@pytest.fixture(scope="session")
def sin_table(sin_spec):
    return tabulate(sin_spec, -3.0, 3.0, 61)


@pytest.fixture(scope="session")
def flat_table(flat_spec):
    return tabulate(flat_spec, -3.0, 3.0, 61)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    prev = _CRITERIA.get(number, ("PASS", 0.0, title))
    status = "PASS" if rep.passed and prev[0] == "PASS" else "FAIL"
    _CRITERIA[number] = (status, prev[1] + rep.duration, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, secs, title = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {status}  {secs:7.1f}s  {title}")
