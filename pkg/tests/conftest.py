import pytest

from barriertop.models import make_barrier_model, make_quadratic_model
from barriertop.scenario import make_scenario


@pytest.fixture(scope="session")
def quad1():
    return make_quadratic_model([1.0])


@pytest.fixture(scope="session")
def quad12():
    return make_quadratic_model([1.0, 2.0])


@pytest.fixture(scope="session")
def bar1():
    return make_barrier_model([1.0])


@pytest.fixture(scope="session")
def bar12():
    return make_barrier_model([1.0, 2.0])


@pytest.fixture(scope="session")
def bar1_pert():
    return make_barrier_model([1.0], {(3,): 0.1})


@pytest.fixture(scope="session")
def bar12_pert():
    return make_barrier_model([1.0, 2.0], {(3, 0): 0.05, (0, 3): 0.03})


@pytest.fixture(scope="session")
def scenario_1d(bar1):
    # exact inverted oscillator workbench: lam = 1, eps = 0.1
    return make_scenario(bar1, 0.1, 0.1, 0.0, C0=0.6, C1=0.6, nu=0.05,
                         domain_radius=1.3)


@pytest.fixture(scope="session")
def scenario_2d(bar12):
    return make_scenario(bar12, 0.1, 0.05, 0.0, C0=1.0, C1=1.0, nu=0.1,
                         domain_radius=0.3)


@pytest.fixture(scope="session")
def psi_2d(scenario_2d):
    from barriertop.phases import eikonal_from_section

    return eikonal_from_section(scenario_2d, [0.0])


@pytest.fixture(scope="session")
def family_2d(scenario_2d):
    from barriertop.phases import evolve_phase

    return evolve_phase(scenario_2d, [0.0], t_max=7.0)


def rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-300)
