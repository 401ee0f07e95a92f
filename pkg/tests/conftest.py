import numpy as np
import pytest

from nepv2nep import (
    GPEConfig,
    MuEvaluator,
    NEPOperator,
    build_gpe_problem,
    paper_2x2_problem,
    paper_3x3_problem,
)

# truncated reference values for the two builtin dense instances
EIGS_2X2 = (4.2175, 174.5385)
EIGS_3X3 = (-1.3447, 19.0165, 46.4337)
VECS_3X3 = {
    -1.3447: np.array([0.0708, -0.6851, 0.7250]),
    19.0165: np.array([0.9611, -0.1575, -0.2269]),
    46.4337: np.array([0.1577, 0.7330, 0.6617]),
}


@pytest.fixture(scope="session")
def p2():
    return paper_2x2_problem()


@pytest.fixture(scope="session")
def p3():
    return paper_3x3_problem()


@pytest.fixture(scope="session")
def gpe16():
    """Tiny grid instance: fast to assemble and factorize in unit tests."""
    return build_gpe_problem(GPEConfig(N=16))


@pytest.fixture()
def ev2(p2):
    return MuEvaluator(p2)


@pytest.fixture()
def ev3(p3):
    return MuEvaluator(p3)


@pytest.fixture()
def opr3(p3):
    return NEPOperator(p3, MuEvaluator(p3))


def f_closed_form(lam):
    """mu^2(lambda) of the 2x2 instance in closed form."""
    return ((lam**2 - 10 * lam + 23) ** 2 / (13 * lam**2 - 116 * lam + 281)) ** (1.0 / 3.0)
