import pytest

from pbrcontrol.analysis import fishing_scenario
from pbrcontrol.dynamics import ReactorParams
from pbrcontrol.growth import BeerLambertMonod, LogisticGrowth
from pbrcontrol.solver import best_constant, solve


@pytest.fixture(scope="session")
def table1():
    return ReactorParams()


@pytest.fixture(scope="session")
def monod():
    return BeerLambertMonod()


@pytest.fixture(scope="session")
def logistic():
    return LogisticGrowth(alpha=6.0, K=10.0, r_link=1.0)


@pytest.fixture(scope="session")
def sol_table1(table1):
    return solve(table1)


@pytest.fixture(scope="session")
def sol_high_r():
    return solve(ReactorParams(r=0.7))


@pytest.fixture(scope="session")
def sol_reduced_bound():
    return solve(ReactorParams(u_max=0.8))


@pytest.fixture(scope="session")
def sol_tight_bound():
    return solve(ReactorParams(u_max=0.1))


@pytest.fixture(scope="session")
def const_table1(table1):
    return best_constant(table1)


@pytest.fixture(scope="session")
def const_high_r():
    return best_constant(ReactorParams(r=0.7))


@pytest.fixture(scope="session")
def fishing():
    return fishing_scenario()


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Shared list of criterion lines, echoed in the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
