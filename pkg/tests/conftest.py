"""Shared fixtures for the FedExProx laboratory tests."""
import numpy as np
import pytest

from fedexprox.envelope import EnvelopeContext
from fedexprox.objectives import AffineIndicatorObjective, QuadraticObjective
from fedexprox.problems import gen_example1, gen_feasibility, gen_regression


@pytest.fixture
def rng():
    """Return a seeded generator for test inputs."""
    return np.random.default_rng(20240601)


@pytest.fixture
def regression():
    """Return a small interpolated least-squares problem."""
    return gen_regression(n=4, rows_per_client=3, d=20, seed=7)


@pytest.fixture
def example1():
    """Return the separable family with n=4, theta=1."""
    return gen_example1(n=4, theta=1.0)


@pytest.fixture
def feasibility():
    """Return a three-set affine feasibility problem in d=10."""
    return gen_feasibility(n=3, d=10, rows_per_set=2, seed=11)


@pytest.fixture
def scalar_quadratic():
    """Return f(x) = x^2 / 2 in one dimension."""
    return QuadraticObjective([[1.0]], [0.0])


@pytest.fixture
def axis_indicator():
    """Return the indicator of the x_2-axis {x : x_1 = 0}."""
    return AffineIndicatorObjective([[1.0, 0.0]], [0.0])


def make_context(gamma, *clients):
    """Return an envelope context over the given clients."""
    return EnvelopeContext(gamma, list(clients))


def random_quadratic(rng, max_rows=9, max_dim=30, client_id=0):
    """Return a random U[0,1) quadratic client."""
    m = int(rng.integers(1, max_rows + 1))
    d = int(rng.integers(2, max_dim + 1))
    return QuadraticObjective(rng.random((m, d)), rng.random(m), client_id=client_id)
