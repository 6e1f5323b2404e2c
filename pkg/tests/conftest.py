import numpy as np
import pytest

from sketchnewton.bench import random_qp, synthetic_dataset
from sketchnewton.problems import Iterate, make_logreg_problem, make_pde_problem, make_qp_problem


@pytest.fixture
def unit_qp():
    """min 0.5||x||^2 subject to x1 + x2 = 1; KKT point (0.5, 0.5, -0.5)."""
    return make_qp_problem(np.eye(2), np.zeros(2), np.array([[1.0, 1.0]]), np.array([1.0]))


@pytest.fixture
def qp_origin():
    return Iterate(np.zeros(2), np.zeros(1))


@pytest.fixture
def pde_problem():
    return make_pde_problem(3, 0.1, 0.1, np.sqrt(15.0))


@pytest.fixture
def pde_start(pde_problem):
    return Iterate(np.ones(pde_problem.n), np.ones(pde_problem.m))


@pytest.fixture
def logreg_problem():
    data = synthetic_dataset(40, 12, seed=7)
    return make_logreg_problem(data, m_lin=3, seed=11)


@pytest.fixture
def logreg_start(logreg_problem):
    n = logreg_problem.n
    return Iterate(np.ones(n) / np.sqrt(n), np.zeros(logreg_problem.m))


def finite_difference_gradient(f, x, h=1e-6):
    """Central differences of a scalar function of a vector."""
    g = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        e = np.zeros_like(x, dtype=float)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def finite_difference_jacobian(fun, x, h=1e-6):
    """Central differences of a vector function of a vector."""
    f0 = np.asarray(fun(x))
    J = np.zeros((f0.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x, dtype=float)
        e[i] = h
        J[:, i] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h)
    return J
