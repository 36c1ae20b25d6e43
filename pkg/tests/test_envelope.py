"""Tests for Moreau envelopes and their smoothness constants."""
import numpy as np
import pytest

from fedexprox.envelope import (
    EnvelopeContext,
    average_envelope_grad,
    average_envelope_value,
    average_hessian_matvec,
    envelope_smoothness,
    moreau_grad,
    moreau_value,
)
from fedexprox.errors import ContractError
from fedexprox.objectives import AffineIndicatorObjective, QuadraticObjective

from .conftest import make_context, random_quadratic


def test_scalar_envelope_value_and_gradient(scalar_quadratic):
    """Test M and grad M of x^2/2 with gamma=1 at 2."""
    ctx = make_context(1.0, scalar_quadratic)
    assert moreau_value(ctx, 0, np.array([2.0])) == pytest.approx(1.0)
    np.testing.assert_allclose(moreau_grad(ctx, 0, np.array([2.0])), [1.0])


def test_envelope_at_minimizer_equals_minimum():
    """Test that the envelope matches f at a minimizer."""
    ctx = make_context(1.0, QuadraticObjective([[1.0]], [3.0]))
    assert moreau_value(ctx, 0, np.array([3.0])) == pytest.approx(0.0, abs=1e-20)


def test_indicator_envelope_is_scaled_distance(axis_indicator):
    """Test that the indicator envelope is dist^2 / (2 gamma)."""
    ctx = make_context(2.0, axis_indicator)
    assert moreau_value(ctx, 0, np.array([3.0, 1.0])) == pytest.approx(9.0 / 4.0)
    np.testing.assert_allclose(moreau_grad(ctx, 0, np.array([3.0, 1.0])), [1.5, 0.0])


def test_identical_clients_average_to_one_client(rng):
    """Test that n copies of a client have the client's envelope."""
    A, b = rng.random((3, 6)), rng.random(3)
    single = make_context(0.5, QuadraticObjective(A, b))
    many = make_context(0.5, *[QuadraticObjective(A, b, client_id=i) for i in range(4)])
    x = rng.standard_normal(6)
    assert average_envelope_value(many, x) == pytest.approx(average_envelope_value(single, x))
    np.testing.assert_allclose(average_envelope_grad(many, x), average_envelope_grad(single, x))


def test_separable_envelope_closed_form(example1, rng):
    """Test M(x) = ||x||^2 / 16 on the separable family with n=4, theta=gamma=1."""
    ctx = EnvelopeContext(1.0, example1.clients)
    x = rng.standard_normal(4)
    assert average_envelope_value(ctx, x) == pytest.approx(float(x @ x) / 16.0, rel=1e-12)
    np.testing.assert_allclose(average_envelope_grad(ctx, x), x / 8.0, rtol=1e-12)


def test_gradient_matches_finite_differences(rng):
    """Test grad M against central differences on random clients."""
    for _ in range(50):
        obj = random_quadratic(rng)
        gamma = float(10.0 ** rng.uniform(-1.0, 1.0))
        ctx = make_context(gamma, obj)
        x = rng.standard_normal(obj.d)
        grad = moreau_grad(ctx, 0, x)
        h = 1e-6 * (1.0 + np.linalg.norm(x))
        fd = np.empty(obj.d)
        for j in range(obj.d):
            step = np.zeros(obj.d)
            step[j] = h
            fd[j] = (moreau_value(ctx, 0, x + step) - moreau_value(ctx, 0, x - step)) / (2.0 * h)
        assert np.linalg.norm(fd - grad) <= 1e-5 * np.linalg.norm(grad)


def test_hessian_matvec_matches_gradient_differences(regression, feasibility, rng):
    """Test H v against differences of the averaged gradient."""
    for problem in (regression, feasibility):
        ctx = EnvelopeContext(0.8, problem.clients)
        x = rng.standard_normal(problem.d)
        v = rng.standard_normal(problem.d)
        h = 1e-4
        fd = (average_envelope_grad(ctx, x + h * v) - average_envelope_grad(ctx, x - h * v)) / (2 * h)
        hv = average_hessian_matvec(ctx, v)
        assert np.linalg.norm(fd - hv) <= 1e-6 * np.linalg.norm(hv)


def test_separable_family_smoothness(example1):
    """Test L_gamma = theta / (n (1 + gamma theta)) = 1/8."""
    L_gamma, per_client = envelope_smoothness(EnvelopeContext(1.0, example1.clients))
    assert L_gamma == pytest.approx(0.125, rel=1e-8)
    assert L_gamma == pytest.approx(example1.closed_form_l_gamma(1.0), rel=1e-8)
    assert per_client == pytest.approx([0.5] * 4)


def test_single_client_smoothness(rng):
    """Test L_gamma = L / (1 + gamma L) for one quadratic client."""
    obj = QuadraticObjective(rng.random((4, 12)), rng.random(4))
    L = obj.smoothness()
    L_gamma, per_client = envelope_smoothness(make_context(0.3, obj))
    assert L_gamma == pytest.approx(L / (1.0 + 0.3 * L), rel=1e-8)
    assert per_client[0] == pytest.approx(L / (1.0 + 0.3 * L))


def test_smoothness_sandwich(rng):
    """Test (1/n^2) sum L_i,gamma <= L_gamma <= (1/n) sum L_i,gamma."""
    for _ in range(20):
        n = int(rng.integers(2, 7))
        d = int(rng.integers(n * 2, 31))
        clients = [
            QuadraticObjective(rng.random((2, d)), rng.random(2), client_id=i) for i in range(n)
        ]
        gamma = float(10.0 ** rng.uniform(-2.0, 1.0))
        L_gamma, per_client = envelope_smoothness(EnvelopeContext(gamma, clients))
        lower = sum(per_client) / n**2
        upper = sum(per_client) / n
        assert lower - 1e-8 <= L_gamma <= upper + 1e-8
        assert all(value < 1.0 / gamma for value in per_client)


def test_per_client_constants_keep_order(regression):
    """Test that L_i -> L_i/(1 + gamma L_i) preserves the ordering."""
    _, per_client = envelope_smoothness(EnvelopeContext(2.0, regression.clients))
    assert np.argsort(per_client).tolist() == np.argsort(regression.smoothness).tolist()


def test_envelope_is_a_lower_bound(regression, rng):
    """Test M(x) <= f(x) and the suboptimality transfer to f."""
    gamma = 0.5
    ctx = EnvelopeContext(gamma, regression.clients)
    for _ in range(10):
        x = rng.standard_normal(regression.d)
        env_gap = average_envelope_value(ctx, x) - ctx.env_minimum
        f_gap = regression.value(x) - regression.optimal_value
        assert average_envelope_value(ctx, x) <= regression.value(x) + 1e-12
        assert env_gap >= f_gap / (1.0 + gamma * regression.L_max) - 1e-10 * (1.0 + f_gap)


def test_minimizers_coincide(regression):
    """Test that the envelope gradient vanishes on the solution set."""
    ctx = EnvelopeContext(1.0, regression.clients)
    grad = average_envelope_grad(ctx, regression.solution_set.reference)
    assert np.linalg.norm(grad) <= 1e-8


def test_nonsmooth_envelope_smoothness(feasibility):
    """Test per-client constants 1/gamma and L_gamma <= 1/gamma."""
    L_gamma, per_client = envelope_smoothness(EnvelopeContext(2.0, feasibility.clients))
    assert per_client == [0.5] * 3
    assert 0.5 / 3 - 1e-8 <= L_gamma <= 0.5 + 1e-8


def test_mixed_clients_are_rejected(scalar_quadratic):
    """Test that smooth and non-smooth clients cannot be mixed."""
    indicator = AffineIndicatorObjective([[1.0]], [0.0], client_id=1)
    ctx = make_context(1.0, scalar_quadratic, indicator)
    with pytest.raises(ContractError):
        envelope_smoothness(ctx)


def test_context_validation(scalar_quadratic, axis_indicator):
    """Test the envelope context preconditions."""
    with pytest.raises(ContractError):
        EnvelopeContext(0.0, [scalar_quadratic])
    with pytest.raises(ContractError):
        EnvelopeContext(1.0, [])
    with pytest.raises(ContractError):
        EnvelopeContext(1.0, [scalar_quadratic, axis_indicator])
    with pytest.raises(ContractError):
        make_context(1.0, scalar_quadratic).client(1)
