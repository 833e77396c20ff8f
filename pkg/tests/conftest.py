import numpy as np
import pytest
from hypothesis import settings

from aomsim.operators import SystemParams, build_operators

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_params():
    return SystemParams(n_m=3, n_c=4)


@pytest.fixture(scope="session")
def small_ops(small_params):
    return build_operators(small_params)


def random_density_matrix(dim, rng):
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = z @ z.conj().T
    return rho / np.trace(rho).real


def random_ket(dim, rng):
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


_ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def report(criterion, passed, detail):
        status = "PASS" if passed else "FAIL"
        _ACCEPTANCE_LINES[criterion] = f"criterion {criterion}: {status} {detail}"
        print(_ACCEPTANCE_LINES[criterion])
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(_ACCEPTANCE_LINES[key])
