import numpy as np
import pytest

from mvlab.catalog import LinearDrift, load_model

# lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def lin1():
    return LinearDrift([[-1.0]], [[0.5]])


@pytest.fixture(scope="session")
def ou():
    return LinearDrift([[-1.0]], [[0.0]])


@pytest.fixture(scope="session")
def langevin():
    return load_model({"kind": "langevin", "U": "quadratic_cos", "alpha": 1.0, "U_gamma": 0.3,
                       "V": "quadratic", "beta": 0.5})


@pytest.fixture(scope="session")
def langevin_quad():
    return load_model({"kind": "langevin", "U": "quadratic", "alpha": 1.0, "V": "quadratic", "beta": 0.5})


@pytest.fixture(scope="session")
def lin2():
    return LinearDrift([[-1.2, 0.3], [-0.1, -0.9]], [[0.2, 0.1], [0.0, 0.3]])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _numpy_errors():
    with np.errstate(over="raise", invalid="raise"):
        yield
