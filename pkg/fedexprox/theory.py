"""Rate constants, optimal extrapolation and convergence bounds.

Every rate function takes its constants explicitly; build_rate_report is the
one place that estimates them from a problem.
"""
from __future__ import annotations

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .const import ALPHA_GRADS, ALPHA_GRADS_PRIME, ALPHA_STOPS, REPORT_GRID_POINTS
from .envelope import EnvelopeContext, envelope_smoothness
from .errors import ContractError
from .models import FederatedProblem, RateReport

_LOGGER = logging.getLogger(__name__)


def _check_tau(n: int, tau: int) -> None:
    """Validate a sample size against the number of clients."""
    if n < 1:
        raise ContractError(f"n must be positive, got {n}")
    if not 1 <= tau <= n:
        raise ContractError(f"tau must lie in [1, {n}], got {tau}")


def _check_admissible(alpha: float, gamma: float, l_gamma_tau: float) -> float:
    """Return alpha * gamma * L_{gamma,tau}, which must lie in (0, 2)."""
    if not alpha > 0 or not gamma > 0:
        raise ContractError(f"alpha and gamma must be positive, got alpha={alpha}, gamma={gamma}")
    product = alpha * gamma * l_gamma_tau
    if not 0 < product < 2:
        raise ContractError(
            f"alpha={alpha} is not admissible: it must lie in (0, 2/(gamma L_gamma_tau)) "
            f"= (0, {2.0 / (gamma * l_gamma_tau):.17g})"
        )
    return product


def l_gamma_tau(L_max: float, L_gamma: float, gamma: float, n: int, tau: int) -> float:
    """Return the effective smoothness L_{gamma,tau} under tau-nice sampling."""
    _check_tau(n, tau)
    local = L_max / (1.0 + gamma * L_max)
    if tau == n and n > 1:
        return L_gamma
    if tau == 1:
        return local
    weight = n * (tau - 1) / (tau * (n - 1))
    return local + weight * (L_gamma - local)


def rate_constant(
    gamma: float, tau: int, alpha: float, L_max: float, L_gamma_tau: float
) -> float:
    """Return C(gamma, tau, alpha) = (1 + gamma L_max) / (alpha gamma (2 - alpha gamma L_{gamma,tau}))."""
    product = _check_admissible(alpha, gamma, L_gamma_tau)
    return (1.0 + gamma * L_max) / (alpha * gamma * (2.0 - product))


def optimal_alpha(gamma: float, L_gamma_tau: float) -> float:
    """Return alpha_{gamma,tau} = 1 / (gamma L_{gamma,tau})."""
    if not gamma > 0 or not L_gamma_tau > 0:
        raise ContractError(
            f"gamma and L_gamma_tau must be positive, got {gamma} and {L_gamma_tau}"
        )
    return 1.0 / (gamma * L_gamma_tau)


def alpha_grid(gamma: float, L_gamma_tau: float, points: int) -> np.ndarray:
    """Return `points` evenly spaced values strictly inside (0, 2/(gamma L_{gamma,tau}))."""
    upper = 2.0 * optimal_alpha(gamma, L_gamma_tau)
    return np.linspace(0.0, upper, points + 2)[1:-1]


def rate_constant_grid(
    gamma: float, tau: int, L_max: float, L_gamma_tau: float, points: int = REPORT_GRID_POINTS
) -> List[Tuple[float, float]]:
    """Return (alpha, C(gamma, tau, alpha)) pairs over the admissible interval."""
    grid = alpha_grid(gamma, L_gamma_tau, points)
    return [
        (float(alpha), rate_constant(gamma, tau, float(alpha), L_max, L_gamma_tau))
        for alpha in grid
    ]


def fedprox_speedup(gamma: float, tau: int, L_max: float, L_gamma_tau: float) -> float:
    """Return C(gamma, tau, 1) / C(gamma, tau, alpha_{gamma,tau})."""
    product = gamma * L_gamma_tau
    if not 0 < product < 2:
        raise ContractError(f"gamma L_gamma_tau must lie in (0, 2), got {product}")
    return 1.0 / (product * (2.0 - product))


def fedprox_speedup_lower_bound(gamma: float, L_max: float) -> float:
    """Return the guaranteed speedup over FedProx, 1/(q(2 - q)) with q = gamma L_max/(1 + gamma L_max)."""
    if not gamma > 0 or not L_max > 0:
        raise ContractError(f"gamma and L_max must be positive, got {gamma} and {L_max}")
    q = gamma * L_max / (1.0 + gamma * L_max)
    return 1.0 / (q * (2.0 - q))


def fedexp_worst_case_gain_bounds(gamma: float, L_list: Sequence[float]) -> Tuple[float, float]:
    """Return the bounds on L_max / C(gamma, n, alpha_{gamma,n}) implied by the L_gamma sandwich."""
    if not L_list:
        raise ContractError("L_list must not be empty")
    n = len(L_list)
    L_max = max(L_list)
    mean_local = sum(L / (1.0 + gamma * L) for L in L_list) / n
    lo = (L_max / (1.0 + gamma * L_max)) / mean_local
    return lo, n * lo


def fedexp_gain(gamma: float, L_max: float, L_gamma: float) -> float:
    """Return the measured gain L_max / C(gamma, n, alpha_{gamma,n})."""
    return L_max / (L_gamma * (1.0 + gamma * L_max))


def fedexp_worst_case(L_max: float) -> float:
    """Return the worst-case FedExP rate constant 6 L_max."""
    return 6.0 * L_max


def strongly_convex_rate(
    mu: float, gamma: float, tau: int, alpha: float, L_max: float, L_gamma_tau: float
) -> float:
    """Return the per-round contraction factor of the squared distance to x_star."""
    if not mu > 0:
        raise ContractError(f"mu must be positive, got {mu}")
    product = _check_admissible(alpha, gamma, L_gamma_tau)
    factor = 1.0 - alpha * gamma * (2.0 - product) * mu / (2.0 * (1.0 + gamma * L_max))
    if not 0 < factor < 1:
        raise ContractError(
            f"Contraction factor {factor} lies outside (0, 1); the constants are inconsistent"
        )
    return factor


def nonsmooth_rate_constant(gamma: float, tau: int, n: int, L_gamma: float) -> Tuple[float, float]:
    """Return (L_{gamma,tau}, alpha_star) for non-smooth clients with 1/gamma-smooth envelopes."""
    _check_tau(n, tau)
    if not gamma > 0:
        raise ContractError(f"gamma must be positive, got {gamma}")
    local = 1.0 / gamma
    if L_gamma > local * (1.0 + 1e-9):
        raise ContractError(f"L_gamma={L_gamma} exceeds 1/gamma={local}")
    L_gamma = min(L_gamma, local)

    if tau == 1:
        value = local
    elif tau == n:
        value = L_gamma
    else:
        weight = n * (tau - 1) / (tau * (n - 1))
        value = local + weight * (L_gamma - local)
    return value, max(1.0, 1.0 / (gamma * value))


def nonsmooth_bound(gamma: float, tau: int, n: int, L_gamma: float, alpha: float) -> float:
    """Return the coefficient 1/(alpha (2 - alpha gamma L_{gamma,tau})) of the envelope bound."""
    value, _ = nonsmooth_rate_constant(gamma, tau, n, L_gamma)
    product = _check_admissible(alpha, gamma, value)
    return 1.0 / (alpha * (2.0 - product))


def grads_bound(gamma: float, L_max: float, alpha_sum: float) -> float:
    """Return the GraDS coefficient of ||x_0 - x_star||^2 given sum_k alpha_k."""
    return (1.0 + gamma * L_max) / (2.0 + gamma * L_max) * (1.0 / gamma + L_max) / alpha_sum


def grads_prime_bound(gamma: float, L_max: float, alpha_sum: float) -> float:
    """Return the GraDS' coefficient of ||x_0 - x_star||^2 given sum_k alpha'_k."""
    return (1.0 / gamma + L_max) / alpha_sum


def stops_bound(gamma: float, L_max: float, alpha_sum: float) -> float:
    """Return the StoPS coefficient of ||x_0 - x_star||^2 given sum_k alpha_k."""
    return (1.0 / gamma + L_max) / alpha_sum


def stops_l_gamma_bound(gamma: float, L_max: float, L_gamma: float) -> float:
    """Return the StoPS coefficient of ||x_0 - x_star||^2 / K using alpha_k >= 1/(2 gamma L_gamma)."""
    return 2.0 * L_gamma * (1.0 + gamma * L_max)


def grads_pp_bound(gamma: float, L_max: float, K: int, alpha_inf: float = 1.0) -> float:
    """Return the sampled GraDS coefficient of ||x_0 - x_star||^2."""
    return (1.0 + gamma * L_max) / (2.0 + gamma * L_max) * (1.0 / gamma + L_max) / (alpha_inf * K)


def stops_pp_bound(gamma: float, L_max: float, K: int, alpha_inf: Optional[float] = None) -> float:
    """Return the sampled StoPS coefficient of ||x_0 - x_star||^2."""
    if alpha_inf is None:
        alpha_inf = 0.5 * (1.0 + 1.0 / (gamma * L_max))
    return (1.0 / gamma + L_max) / (alpha_inf * K)


def adaptive_bounds(
    kind: str,
    gamma: float,
    L_max: Optional[float],
    L_gamma: float,
    alpha_sum: float,
    rounds: int,
    sampled: bool,
) -> Dict[str, float]:
    """Return the bound coefficients of ||x_0 - x_star||^2 that apply to an adaptive run.

    Empty for non-adaptive policies, non-smooth problems and runs without rounds.
    """
    if L_max is None or rounds < 1 or alpha_sum <= 0:
        return {}
    if sampled:
        if kind == ALPHA_GRADS:
            return {"grads_pp": grads_pp_bound(gamma, L_max, rounds)}
        if kind == ALPHA_STOPS:
            return {"stops_pp": stops_pp_bound(gamma, L_max, rounds)}
        return {}
    if kind == ALPHA_GRADS:
        return {"grads": grads_bound(gamma, L_max, alpha_sum)}
    if kind == ALPHA_GRADS_PRIME:
        return {"grads_prime": grads_prime_bound(gamma, L_max, alpha_sum)}
    if kind == ALPHA_STOPS:
        return {
            "stops": stops_bound(gamma, L_max, alpha_sum),
            "stops_l_gamma": stops_l_gamma_bound(gamma, L_max, L_gamma) / rounds,
        }
    return {}


def build_rate_report(
    problem: FederatedProblem,
    gamma: float,
    tau: Optional[int] = None,
    mu: Optional[float] = None,
) -> RateReport:
    """Estimate the problem's constants at (gamma, tau) and evaluate every rate."""
    n = problem.n
    tau = n if tau is None else tau
    _check_tau(n, tau)

    ctx = EnvelopeContext(gamma, problem.clients)
    L_gamma, _ = envelope_smoothness(ctx)

    if not problem.is_smooth:
        value, alpha_star = nonsmooth_rate_constant(gamma, tau, n, L_gamma)
        report = RateReport(
            gamma=gamma,
            tau=tau,
            n=n,
            L_max=None,
            L_gamma=L_gamma,
            L_gamma_tau=value,
            alpha_opt=alpha_star,
            C_opt=nonsmooth_bound(gamma, tau, n, L_gamma, alpha_star),
            C_grid=[],
            speedup_vs_fedprox=None,
            speedup_lower_bound=None,
            fedexp_worst_ratio_bounds=None,
            fedexp_gain=None,
            smooth=False,
        )
        _LOGGER.info(
            "Rate report (non-smooth) gamma=%g tau=%d: L_gamma=%.6g alpha_star=%.6g",
            gamma,
            tau,
            L_gamma,
            alpha_star,
        )
        return report

    L_max = problem.L_max
    value = l_gamma_tau(L_max, L_gamma, gamma, n, tau)
    alpha_opt = optimal_alpha(gamma, value)
    report = RateReport(
        gamma=gamma,
        tau=tau,
        n=n,
        L_max=L_max,
        L_gamma=L_gamma,
        L_gamma_tau=value,
        alpha_opt=alpha_opt,
        C_opt=rate_constant(gamma, tau, alpha_opt, L_max, value),
        C_grid=rate_constant_grid(gamma, tau, L_max, value),
        speedup_vs_fedprox=fedprox_speedup(gamma, tau, L_max, value),
        speedup_lower_bound=fedprox_speedup_lower_bound(gamma, L_max),
        fedexp_worst_ratio_bounds=fedexp_worst_case_gain_bounds(gamma, problem.smoothness),
        fedexp_gain=fedexp_gain(gamma, L_max, L_gamma),
        fedexp_worst_case=fedexp_worst_case(L_max),
    )
    if mu is not None:
        report.mu = mu
        report.strongly_convex_rate = strongly_convex_rate(mu, gamma, tau, alpha_opt, L_max, value)

    _LOGGER.info(
        "Rate report gamma=%g tau=%d: L_max=%.6g L_gamma=%.6g alpha_opt=%.6g speedup=%.4f",
        gamma,
        tau,
        L_max,
        L_gamma,
        alpha_opt,
        report.speedup_vs_fedprox,
    )
    return report
