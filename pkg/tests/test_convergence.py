"""End-to-end convergence checks on small generated problems."""
import numpy as np
import pytest
from scipy.linalg import cho_factor, cho_solve

from fedexprox.envelope import EnvelopeContext, envelope_smoothness
from fedexprox.harness import compare_runs
from fedexprox.models import AlgorithmConfig, AlphaPolicy
from fedexprox.problems import gen_feasibility, gen_regression
from fedexprox.spectral import strong_convexity_constant
from fedexprox.theory import (
    build_rate_report,
    nonsmooth_rate_constant,
    rate_constant,
    strongly_convex_rate,
)
from fedexprox.algorithms import run


@pytest.mark.slow
@pytest.mark.parametrize("gamma", [0.01, 0.1, 1.0])
def test_extrapolation_speedup_over_fedprox(gamma):
    """Test the rounds FedProx needs over the rounds FedExProx needs to reach 1e-6."""
    problem = gen_regression(n=10, rows_per_client=5, d=100, seed=0)
    report = build_rate_report(problem, gamma)
    common = {"gamma": gamma, "iterations": 100_000, "halt_tolerance": 1e-6}
    fedprox = run(problem, AlgorithmConfig(label="fedprox", method="fedprox", **common))
    fedexprox = run(problem, AlgorithmConfig(label="fedexprox", alpha=AlphaPolicy("optimal"), **common))

    comparison = compare_runs(fedprox, fedexprox, 1e-6)
    assert comparison.status == "ok"
    expected = 2.0 if report.alpha_opt >= 2.5 else max(1.0, 0.99 * report.alpha_opt)
    assert comparison.speedup >= expected


@pytest.mark.parametrize("gamma", [0.1, 1.0])
@pytest.mark.parametrize("scale", [None, 1.0, 1.5])
def test_sublinear_bound_holds(gamma, scale):
    """Test min_{j<k} f(x_j) - f_star <= C ||x_0 - x_star||^2 / k on every prefix."""
    problem = gen_regression(n=4, rows_per_client=3, d=20, seed=2)
    report = build_rate_report(problem, gamma)
    alpha = report.alpha_opt if scale is None else min(scale, 1.9 * report.alpha_opt)
    policy = AlphaPolicy("optimal") if scale is None else AlphaPolicy("constant", alpha)
    trace = run(problem, AlgorithmConfig(gamma=gamma, alpha=policy, iterations=300))

    constant = rate_constant(gamma, problem.n, alpha, report.L_max, report.L_gamma_tau)
    distance = trace.initial.dist_sq
    values = [trace.initial.f_subopt] + [record.f_subopt for record in trace.records]
    best = np.minimum.accumulate(values)
    for k in range(1, len(values)):
        assert best[k - 1] <= 1.01 * constant * distance / k


def test_strongly_convex_contraction():
    """Test the per-round contraction of the squared distance to x_star."""
    problem = gen_regression(n=5, rows_per_client=4, d=20, seed=4)
    mu = strong_convexity_constant(problem)
    report = build_rate_report(problem, 1.0, mu=mu)
    trace = run(problem, AlgorithmConfig(gamma=1.0, alpha=AlphaPolicy("optimal"), iterations=500))

    factor = strongly_convex_rate(mu, 1.0, problem.n, report.alpha_opt, report.L_max, report.L_gamma_tau)
    assert factor == pytest.approx(report.strongly_convex_rate)
    distances = [trace.initial.dist_sq] + [r.dist_sq_to_solution_set for r in trace.records]
    for before, after in zip(distances, distances[1:]):
        assert after <= (factor + 1e-9) * before


@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0])
def test_adaptive_lower_bounds(gamma):
    """Test the lower bounds of the adaptive extrapolation rules."""
    problem = gen_regression(n=6, rows_per_client=3, d=30, seed=5)
    L_gamma, _ = envelope_smoothness(EnvelopeContext(gamma, problem.clients))
    L_max = problem.L_max

    def alphas(kind, tau=None):
        cfg = AlgorithmConfig(
            gamma=gamma, alpha=AlphaPolicy(kind), tau=tau, seed=1, iterations=200, halt_tolerance=1e-10
        )
        return run(problem, cfg).alphas

    assert min(alphas("grads")) >= 1.0 - 1e-12
    assert min(alphas("grads", tau=3)) >= 1.0 - 1e-12
    assert min(alphas("stops")) >= 1.0 / (2.0 * gamma * L_gamma) - 1e-9
    assert min(alphas("stops", tau=3)) >= 0.5 * (1.0 + 1.0 / (gamma * L_max)) - 1e-9
    primes = alphas("grads_prime")
    assert min(primes) >= (1.0 + gamma * L_max) / (gamma * L_max) - 1e-9


@pytest.mark.parametrize("choice", ["one", "one_and_half", "star"])
def test_averaged_projections_match_reference_loop(choice):
    """Test the feasibility run against an independently coded projection loop."""
    problem = gen_feasibility(n=3, d=10, rows_per_set=2, seed=7)
    L_gamma, _ = envelope_smoothness(EnvelopeContext(1.0, problem.clients))
    _, alpha_star = nonsmooth_rate_constant(1.0, 2, 3, L_gamma)
    alpha = {"one": 1.0, "one_and_half": 1.5, "star": alpha_star}[choice]
    policy = AlphaPolicy("optimal") if choice == "star" else AlphaPolicy("constant", alpha)

    trace = run(
        problem,
        AlgorithmConfig(
            gamma=1.0, alpha=policy, tau=2, seed=3, iterations=200, halt_tolerance=0.0, keep_iterates=True
        ),
    )
    assert len(trace) == 200
    assert trace.alphas == [alpha] * 200

    factors = [cho_factor(client.C @ client.C.T) for client in problem.clients]
    x = np.zeros(problem.d)
    for k, record in enumerate(trace.records):
        total = np.zeros_like(x)
        for i in sorted(record.sampled):
            client = problem.clients[i]
            total = total + (x - client.C.T @ cho_solve(factors[i], client.C @ x - client.e))
        x = x + alpha * (total / len(record.sampled) - x)
        np.testing.assert_array_equal(trace.iterates[k + 1], x)


@pytest.mark.parametrize("gamma", [0.1, 1.0])
@pytest.mark.parametrize("method, policy", [("fedprox", None), ("fedexprox", "optimal")])
def test_distance_never_increases(gamma, method, policy):
    """Test monotone distance to the solution set under alpha gamma L_gamma <= 1."""
    problem = gen_regression(n=5, rows_per_client=3, d=30, seed=6)
    alpha = AlphaPolicy(policy) if policy else AlphaPolicy()
    trace = run(problem, AlgorithmConfig(method=method, gamma=gamma, alpha=alpha, iterations=200))
    distances = [trace.initial.dist_sq] + [r.dist_sq_to_solution_set for r in trace.records]
    for before, after in zip(distances, distances[1:]):
        assert after <= before + 1e-10


def test_participation_ordering():
    """Test that C(gamma, tau, alpha_tau) falls and alpha_tau grows with tau."""
    problem = gen_regression(n=6, rows_per_client=3, d=30, seed=8)
    reports = [build_rate_report(problem, 0.5, tau) for tau in (1, 2, 3, 6)]
    for smaller, larger in zip(reports, reports[1:]):
        assert larger.C_opt <= smaller.C_opt
        assert larger.alpha_opt >= smaller.alpha_opt
    assert reports[0].C_opt == pytest.approx(problem.L_max, rel=1e-12)
