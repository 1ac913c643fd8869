import numpy as np
import pytest

from sosattractor import (HENON, NO_POLY_LYAPUNOV, VAN_DER_POL, DynamicalSystem, SemialgebraicSet,
                          SolveParams, solve_attractor)


@pytest.fixture(scope="session")
def vdp_system():
    return DynamicalSystem.parse("continuous", VAN_DER_POL)


@pytest.fixture(scope="session")
def annulus():
    return SemialgebraicSet.annulus(2, 0.4, 2.0)


@pytest.fixture(scope="session")
def vdp_certs(vdp_system, annulus):
    """Van der Pol certificates for k = 4, 6, 8 with beta = 0.2."""
    return {k: solve_attractor(vdp_system, annulus, SolveParams.continuous(k, 0.2)) for k in (4, 6, 8)}


@pytest.fixture(scope="session")
def henon_system():
    return DynamicalSystem.parse("discrete", HENON)


@pytest.fixture(scope="session")
def npl_system():
    return DynamicalSystem.parse("continuous", NO_POLY_LYAPUNOV)


@pytest.fixture(scope="session")
def square():
    return SemialgebraicSet.box([-1, -1], [1, 1], np.sqrt(2))


@pytest.fixture(scope="session")
def contraction():
    """f = -x in the plane."""
    return DynamicalSystem.parse("continuous", ["-x1", "-x2"])


@pytest.fixture(scope="session")
def unit_disk():
    return SemialgebraicSet.ball(2, 1.0)


# acceptance summary -----------------------------------------------------------

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    marks = getattr(report, "criterion", None)
    if marks is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[marks[0]] = (marks[1], report.outcome, report.duration)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().criterion = mark.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, outcome, dur = _criteria[n]
        word = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {n:>2}: {word}  {title}  ({dur:.1f}s)")
