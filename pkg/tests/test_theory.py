"""Tests for rate constants and convergence bounds."""
import numpy as np
import pytest

from fedexprox.const import ALPHA_GRID_POINTS
from fedexprox.errors import ContractError
from fedexprox.problems import gen_example1
from fedexprox.theory import (
    adaptive_bounds,
    alpha_grid,
    build_rate_report,
    fedexp_gain,
    fedexp_worst_case,
    fedexp_worst_case_gain_bounds,
    fedprox_speedup,
    fedprox_speedup_lower_bound,
    grads_bound,
    grads_pp_bound,
    grads_prime_bound,
    l_gamma_tau,
    nonsmooth_bound,
    nonsmooth_rate_constant,
    optimal_alpha,
    rate_constant,
    rate_constant_grid,
    stops_bound,
    stops_l_gamma_bound,
    stops_pp_bound,
    strongly_convex_rate,
)


def test_l_gamma_tau_endpoints():
    """Test full participation and single-client sampling."""
    assert l_gamma_tau(1.0, 0.3, 1.0, 4, 4) == 0.3
    assert l_gamma_tau(1.0, 0.3, 1.0, 4, 1) == 0.5


def test_l_gamma_tau_interpolates():
    """Test the tau-nice interpolation between the endpoints."""
    expected = (2.0 / 6.0) * 0.5 + (4.0 / 6.0) * 0.3
    assert l_gamma_tau(1.0, 0.3, 1.0, 4, 2) == pytest.approx(expected)


@pytest.mark.parametrize("tau", [0, 5])
def test_l_gamma_tau_rejects_invalid_tau(tau):
    """Test tau outside [1, n]."""
    with pytest.raises(ContractError):
        l_gamma_tau(1.0, 0.3, 1.0, 4, tau)


def test_rate_constant_at_known_points():
    """Test C at the optimal and the unit extrapolation."""
    gamma, L_max, L = 0.5, 2.0, 0.4
    best = optimal_alpha(gamma, L)
    assert best == pytest.approx(5.0)
    assert rate_constant(gamma, 4, best, L_max, L) == pytest.approx(L * (1.0 + gamma * L_max))
    fedprox = (1.0 + gamma * L_max) / (gamma * (2.0 - gamma * L))
    assert rate_constant(gamma, 4, 1.0, L_max, L) == pytest.approx(fedprox)


def test_rate_constant_is_minimized_at_the_optimum():
    """Test that the grid minimum sits at 1 / (gamma L_gamma_tau)."""
    gamma, L_max, L = 0.1, 3.0, 1.2
    grid = alpha_grid(gamma, L, ALPHA_GRID_POINTS)
    values = [rate_constant(gamma, 2, float(a), L_max, L) for a in grid]
    best = float(grid[int(np.argmin(values))])
    assert best == pytest.approx(optimal_alpha(gamma, L), rel=1e-3)


def test_alpha_grid_stays_inside_the_admissible_interval():
    """Test that the grid excludes both endpoints."""
    grid = alpha_grid(1.0, 0.5, 11)
    assert len(grid) == 11
    assert grid[0] > 0.0
    assert grid[-1] < 4.0
    assert len(rate_constant_grid(1.0, 1, 1.0, 0.5, points=11)) == 11


def test_inadmissible_alpha_is_rejected():
    """Test alpha gamma L_gamma_tau outside (0, 2)."""
    with pytest.raises(ContractError, match="not admissible"):
        rate_constant(1.0, 1, 4.0, 1.0, 0.5)
    with pytest.raises(ContractError):
        rate_constant(1.0, 1, -1.0, 1.0, 0.5)


def test_fedprox_speedup_lower_bound():
    """Test the guaranteed speedup at gamma L_max = 1 and its limits."""
    assert fedprox_speedup_lower_bound(1.0, 1.0) == pytest.approx(4.0 / 3.0)
    assert fedprox_speedup_lower_bound(1e-8, 1.0) > 1e6
    assert fedprox_speedup_lower_bound(1e8, 1.0) == pytest.approx(1.0, rel=1e-6)


def test_fedprox_speedup_on_the_separable_family():
    """Test 1 / (gamma L_gamma (2 - gamma L_gamma)) with L_gamma = 1/8."""
    assert fedprox_speedup(1.0, 4, 1.0, 0.125) == pytest.approx(1.0 / (0.125 * 1.875))


def test_speedup_dominates_its_lower_bound(regression):
    """Test the measured speedup against its guaranteed lower bound."""
    for gamma in (0.01, 0.1, 1.0, 10.0):
        report = build_rate_report(regression, gamma)
        assert report.speedup_vs_fedprox >= report.speedup_lower_bound * (1.0 - 1e-9)
        # L_{gamma,tau} (1 + gamma L_max) <= L_max
        assert report.L_gamma_tau * (1.0 + gamma * report.L_max) <= report.L_max * (1.0 + 1e-9)
        assert gamma * report.L_gamma_tau < 1.0


def test_fedexp_gain_bounds():
    """Test the gain bounds for equal, single and mixed smoothness."""
    assert fedexp_worst_case_gain_bounds(1.0, [2.0, 2.0, 2.0]) == pytest.approx((1.0, 3.0))
    assert fedexp_worst_case_gain_bounds(1.0, [5.0]) == pytest.approx((1.0, 1.0))
    lo, hi = fedexp_worst_case_gain_bounds(0.5, [1.0, 4.0])
    assert lo > 1.0
    assert hi == pytest.approx(2.0 * lo)
    assert fedexp_gain(1.0, 1.0, 0.125) == pytest.approx(4.0)
    assert fedexp_worst_case(2.5) == 15.0


def test_measured_gain_lies_within_bounds(regression):
    """Test that the measured FedExP gain sits inside its bounds."""
    report = build_rate_report(regression, 0.5)
    lo, hi = report.fedexp_worst_ratio_bounds
    assert lo * (1.0 - 1e-8) <= report.fedexp_gain <= hi * (1.0 + 1e-8)


def test_strongly_convex_rate():
    """Test the contraction factor and its preconditions."""
    gamma, L_max, L = 1.0, 1.0, 0.25
    best = optimal_alpha(gamma, L)
    factor = strongly_convex_rate(0.1, gamma, 4, best, L_max, L)
    assert factor == pytest.approx(1.0 - 0.1 / (2.0 * L * (1.0 + gamma * L_max)))
    tiny = strongly_convex_rate(1e-9, gamma, 4, best, L_max, L)
    assert 0.0 < 1.0 - tiny < 1e-8
    with pytest.raises(ContractError):
        strongly_convex_rate(0.0, gamma, 4, best, L_max, L)


def test_nonsmooth_rate_constant():
    """Test the non-smooth constants at the sampling endpoints."""
    assert nonsmooth_rate_constant(2.0, 3, 3, 0.2) == (0.2, pytest.approx(2.5))
    assert nonsmooth_rate_constant(2.0, 1, 3, 0.2) == (0.5, 1.0)
    # gamma L_gamma = 1 gives no extrapolation
    assert nonsmooth_rate_constant(1.0, 2, 2, 1.0) == (1.0, 1.0)
    with pytest.raises(ContractError):
        nonsmooth_rate_constant(1.0, 2, 2, 1.5)


def test_nonsmooth_bound_matches_rate_constant():
    """Test 1 / (alpha (2 - alpha gamma L)) at alpha_star."""
    value, alpha_star = nonsmooth_rate_constant(1.0, 3, 3, 0.4)
    assert nonsmooth_bound(1.0, 3, 3, 0.4, alpha_star) == pytest.approx(value)


def test_adaptive_bounds():
    """Test the adaptive coefficients against each other."""
    gamma, L_max, L_gamma, K = 0.5, 2.0, 0.6, 100
    assert stops_bound(gamma, L_max, K / (2.0 * gamma * L_gamma)) == pytest.approx(
        stops_l_gamma_bound(gamma, L_max, L_gamma) / K
    )
    assert grads_pp_bound(gamma, L_max, K) == pytest.approx(grads_bound(gamma, L_max, K))
    assert stops_pp_bound(gamma, L_max, K, alpha_inf=1.0) == pytest.approx(stops_bound(gamma, L_max, K))
    assert stops_pp_bound(gamma, 1.0, K) < stops_bound(gamma, 1.0, K)


def test_adaptive_bounds_by_policy():
    """Test which coefficients a run gets for its policy and participation."""
    gamma, L_max, L_gamma, alpha_sum, K = 0.5, 2.0, 0.6, 150.0, 100
    assert adaptive_bounds("grads", gamma, L_max, L_gamma, alpha_sum, K, False) == {
        "grads": grads_bound(gamma, L_max, alpha_sum)
    }
    assert adaptive_bounds("grads_prime", gamma, L_max, L_gamma, alpha_sum, K, False) == {
        "grads_prime": grads_prime_bound(gamma, L_max, alpha_sum)
    }
    assert adaptive_bounds("stops", gamma, L_max, L_gamma, alpha_sum, K, False) == {
        "stops": stops_bound(gamma, L_max, alpha_sum),
        "stops_l_gamma": stops_l_gamma_bound(gamma, L_max, L_gamma) / K,
    }
    assert adaptive_bounds("grads", gamma, L_max, L_gamma, alpha_sum, K, True) == {
        "grads_pp": grads_pp_bound(gamma, L_max, K)
    }
    assert adaptive_bounds("stops", gamma, L_max, L_gamma, alpha_sum, K, True) == {
        "stops_pp": stops_pp_bound(gamma, L_max, K)
    }
    assert adaptive_bounds("optimal", gamma, L_max, L_gamma, alpha_sum, K, False) == {}
    assert adaptive_bounds("grads", gamma, None, L_gamma, alpha_sum, K, False) == {}
    assert adaptive_bounds("grads", gamma, L_max, L_gamma, 0.0, 0, False) == {}


def test_grads_prime_never_loses_to_grads():
    """Test that the scaled diversity rule gives a smaller coefficient."""
    for gamma in (0.01, 1.0, 100.0):
        L_max, alpha_sum = 3.0, 50.0
        scaled = alpha_sum * (1.0 + gamma * L_max) / (gamma * L_max)
        assert grads_prime_bound(gamma, L_max, scaled) <= grads_bound(gamma, L_max, alpha_sum)


@pytest.mark.parametrize("n", [2, 4, 8])
def test_separable_family_report(n):
    """Test the closed forms of the separable family."""
    problem = gen_example1(n, theta=1.0)
    report = build_rate_report(problem, 1.0)
    assert report.L_gamma == pytest.approx(1.0 / (2.0 * n), rel=1e-8)
    assert report.fedexp_gain == pytest.approx(n, rel=1e-8)
    assert report.alpha_opt == pytest.approx(2.0 * n, rel=1e-8)
    assert report.C_opt == pytest.approx(1.0 / n, rel=1e-8)
    assert report.fedexp_worst_ratio_bounds == pytest.approx((1.0, float(n)))


def test_report_ordering_in_tau(regression):
    """Test that more participation never worsens the optimal constants."""
    reports = [build_rate_report(regression, 0.5, tau) for tau in (1, 2, 3, 4)]
    assert reports[0].C_opt == pytest.approx(regression.L_max, rel=1e-12)
    for smaller, larger in zip(reports, reports[1:]):
        assert larger.C_opt <= smaller.C_opt
        assert larger.alpha_opt >= smaller.alpha_opt


def test_nonsmooth_report(feasibility):
    """Test the rate report of an affine feasibility problem."""
    report = build_rate_report(feasibility, 1.0)
    assert not report.smooth
    assert report.L_max is None
    assert report.alpha_opt >= 1.0
    assert report.speedup_vs_fedprox is None
    assert report.as_dict()["C_grid"] == []


def test_strongly_convex_report():
    """Test that mu feeds the contraction factor of the report."""
    problem = gen_example1(4, theta=1.0)
    report = build_rate_report(problem, 1.0, mu=0.25)
    assert report.mu == 0.25
    assert 0.0 < report.strongly_convex_rate < 1.0
