"""Server-side iteration engine for FedProx, FedExProx and the FedExP baseline."""
from __future__ import annotations

import logging
import math
import time
from typing import Callable, List, Optional, Sequence

import numpy as np

from .const import (
    ALPHA_CONSTANT,
    ALPHA_FEDEXP,
    ALPHA_GRADS,
    ALPHA_GRADS_PRIME,
    ALPHA_KINDS,
    ALPHA_OPTIMAL,
    ALPHA_STOPS,
    CONVERGED_THRESHOLD,
    DEVIATION_FEDEXP_GUARD,
    FEDEXP_DENOMINATOR_GUARD,
    METHOD_FEDEXP,
    METHOD_FEDEXPROX,
    METHOD_FEDPROX,
    METHODS,
    STATUS_COMPLETED,
    STATUS_CONVERGED,
    STATUS_HALTED,
)
from .envelope import EnvelopeContext, envelope_smoothness, value_from_prox
from .errors import ConfigValidationError, ContractError, ConvergedSignal, OracleFailureError
from .models import (
    AlgorithmConfig,
    FederatedProblem,
    RoundMetrics,
    RoundRecord,
    RunTrace,
    SamplingPlan,
)
from .objectives import ClientObjective
from .theory import l_gamma_tau, nonsmooth_rate_constant, optimal_alpha

_LOGGER = logging.getLogger(__name__)

AlphaRule = Callable[[np.ndarray, List[np.ndarray], List[int]], float]


def sample_tau_nice(plan: SamplingPlan, k: int) -> List[int]:
    """Return the sorted client indices sampled in round k.

    A partial Fisher-Yates shuffle driven by a Philox stream keyed by
    (seed, k), so every round is reproducible on its own.
    """
    if not 1 <= plan.tau <= plan.n:
        raise ContractError(f"tau must lie in [1, {plan.n}], got {plan.tau}")
    if plan.seed < 0 or k < 0:
        raise ContractError(f"seed and round index must be non-negative, got {plan.seed} and {k}")
    if plan.tau == plan.n:
        return list(range(plan.n))

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([plan.seed, k])))
    pool = list(range(plan.n))
    for j in range(plan.tau):
        swap = j + int(rng.integers(plan.n - j))
        pool[j], pool[swap] = pool[swap], pool[j]
    return sorted(pool[: plan.tau])


def _all_proxes(ctx: EnvelopeContext, x: np.ndarray) -> List[np.ndarray]:
    """Return Prox_{gamma f_i}(x) for every client, in index order."""
    return [client.prox(ctx.gamma, x) for client in ctx.clients]


def _extrapolate(x: np.ndarray, points: Sequence[np.ndarray], alpha: float) -> np.ndarray:
    """Return x + alpha (mean(points) - x), summing points in the given order."""
    total = np.zeros_like(x)
    for point in points:
        total = total + point
    return x + alpha * (total / len(points) - x)


def _check_step(alpha_k: float, gamma: float) -> None:
    """Validate the round parameters."""
    if not alpha_k > 0 or not math.isfinite(alpha_k):
        raise ContractError(f"alpha_k must be positive and finite, got {alpha_k}")
    if not gamma > 0:
        raise ContractError(f"gamma must be positive, got {gamma}")


def fedexprox_round(
    x_k: np.ndarray,
    ctx: EnvelopeContext,
    S_k: Sequence[int],
    alpha_k: float,
    gamma: float,
) -> np.ndarray:
    """Return x_k + alpha_k ((1/tau) sum_{i in S_k} Prox_{gamma f_i}(x_k) - x_k)."""
    _check_step(alpha_k, gamma)
    x_k = np.asarray(x_k, dtype=float)
    proxes = [ctx.client(i).prox(gamma, x_k) for i in sorted(S_k)]
    return _extrapolate(x_k, proxes, alpha_k)


def fedexprox_round_envelope(
    x_k: np.ndarray,
    ctx: EnvelopeContext,
    S_k: Sequence[int],
    alpha_k: float,
    gamma: float,
) -> np.ndarray:
    """Return x_k - alpha_k gamma (1/tau) sum_{i in S_k} grad M^gamma_{f_i}(x_k)."""
    _check_step(alpha_k, gamma)
    x_k = np.asarray(x_k, dtype=float)
    total = np.zeros_like(x_k)
    for i in sorted(S_k):
        total = total + (x_k - ctx.client(i).prox(gamma, x_k)) / gamma
    return x_k - alpha_k * gamma * (total / len(S_k))


def gradient_diversity(displacements: Sequence[np.ndarray]) -> float:
    """Return mean ||d_i||^2 / ||mean d_i||^2.

    Raises:
        ConvergedSignal: if the squared mean displacement is below 1e-24
    """
    if not displacements:
        raise ContractError("At least one displacement is required")
    tau = len(displacements)
    squares = 0.0
    total = np.zeros_like(displacements[0])
    for delta in displacements:
        squares += float(delta @ delta)
        total = total + delta
    mean = total / tau
    denominator = float(mean @ mean)
    if denominator < CONVERGED_THRESHOLD:
        raise ConvergedSignal(f"averaged prox step vanished ({denominator:.3e})")
    return (squares / tau) / denominator


def _displacements(
    ctx: EnvelopeContext,
    x_k: np.ndarray,
    S: Sequence[int],
    proxes: Optional[Sequence[np.ndarray]] = None,
) -> List[np.ndarray]:
    """Return x_k - Prox_{gamma f_i}(x_k) for i in S, ascending."""
    x_k = np.asarray(x_k, dtype=float)
    if proxes is None:
        return [x_k - ctx.client(i).prox(ctx.gamma, x_k) for i in sorted(S)]
    return [x_k - proxes[i] for i in sorted(S)]


def alpha_grads(
    ctx: EnvelopeContext,
    x_k: np.ndarray,
    S: Sequence[int],
    proxes: Optional[Sequence[np.ndarray]] = None,
) -> float:
    """Return the gradient-diversity extrapolation over the client set S."""
    return gradient_diversity(_displacements(ctx, x_k, S, proxes))


def alpha_grads_prime(
    ctx: EnvelopeContext,
    x_k: np.ndarray,
    S: Sequence[int],
    L_max: float,
    proxes: Optional[Sequence[np.ndarray]] = None,
) -> float:
    """Return alpha_grads scaled by (1 + gamma L_max) / (gamma L_max)."""
    if L_max is None or not L_max > 0:
        raise ContractError(f"L_max must be positive, got {L_max}")
    factor = (1.0 + ctx.gamma * L_max) / (ctx.gamma * L_max)
    return factor * alpha_grads(ctx, x_k, S, proxes)


def alpha_stops(
    ctx: EnvelopeContext,
    x_k: np.ndarray,
    S: Sequence[int],
    proxes: Optional[Sequence[np.ndarray]] = None,
) -> float:
    """Return the stochastic Polyak extrapolation over the client set S.

    Raises:
        ConvergedSignal: if the averaged envelope gradient vanishes
    """
    x_k = np.asarray(x_k, dtype=float)
    order = sorted(S)
    if not order:
        raise ContractError("At least one client is required")

    gap = 0.0
    total = np.zeros_like(x_k)
    for i in order:
        p = ctx.client(i).prox(ctx.gamma, x_k) if proxes is None else proxes[i]
        gap += value_from_prox(ctx.clients[i], ctx.gamma, x_k, p) - ctx.minima[i]
        total = total + (x_k - p)
    mean = total / len(order)
    squared = float(mean @ mean)
    if squared < CONVERGED_THRESHOLD:
        raise ConvergedSignal(f"averaged envelope gradient vanished ({squared:.3e})")
    # gamma ||mean grad M||^2 = ||mean displacement||^2 / gamma
    return (gap / len(order)) / (squared / ctx.gamma)


def alpha_fedexp(client_deltas: Sequence[np.ndarray]) -> float:
    """Return max(1, sum ||delta_i||^2 / (||sum delta_i||^2 + 1e-12))."""
    if not client_deltas:
        raise ContractError("At least one client delta is required")
    squares = 0.0
    total = np.zeros_like(client_deltas[0])
    for delta in client_deltas:
        squares += float(delta @ delta)
        total = total + delta
    return max(1.0, squares / (float(total @ total) + FEDEXP_DENOMINATOR_GUARD))


def local_gradient_descent(
    obj: ClientObjective, x: np.ndarray, steps: int, step_size: float
) -> np.ndarray:
    """Run `steps` gradient steps on one client from x."""
    if steps < 1 or not step_size > 0:
        raise ContractError(f"Invalid local descent: steps={steps}, step_size={step_size}")
    z = np.asarray(x, dtype=float)
    for _ in range(steps):
        z = z - step_size * obj.gradient(z)
    return z


def weighted_iterate_probabilities(alphas: Sequence[float]) -> np.ndarray:
    """Return p_k = alpha_k / sum alpha for the weighted output iterate."""
    weights = np.asarray(alphas, dtype=float)
    if weights.size == 0:
        raise ContractError("No extrapolation parameters to weight")
    if np.any(weights <= 0):
        raise ContractError("Extrapolation parameters must be positive")
    return weights / weights.sum()


def _constant_alpha(problem: FederatedProblem, ctx: EnvelopeContext, cfg: AlgorithmConfig, tau: int) -> float:
    """Resolve a constant or optimal extrapolation parameter."""
    policy = cfg.alpha
    if policy.kind == ALPHA_CONSTANT:
        if policy.value is None or not policy.value > 0:
            raise ConfigValidationError(f"{cfg.label}: constant alpha must be positive, got {policy.value}")
        if not cfg.theory_mode:
            return float(policy.value)

    L_gamma, _ = envelope_smoothness(ctx)
    if problem.is_smooth:
        value = l_gamma_tau(problem.L_max, L_gamma, ctx.gamma, problem.n, tau)
        best = optimal_alpha(ctx.gamma, value)
    else:
        value, best = nonsmooth_rate_constant(ctx.gamma, tau, problem.n, L_gamma)

    if policy.kind == ALPHA_OPTIMAL:
        return best

    product = policy.value * ctx.gamma * value
    if not 0 < product < 2:
        raise ConfigValidationError(
            f"{cfg.label}: alpha={policy.value} violates 0 < alpha gamma L_gamma_tau < 2 "
            f"(upper bound {2.0 / (ctx.gamma * value):.17g})"
        )
    return float(policy.value)


def validate_config(problem: FederatedProblem, cfg: AlgorithmConfig) -> int:
    """Validate an algorithm configuration and return the resolved tau."""
    if cfg.method not in METHODS:
        raise ConfigValidationError(f"unknown method: {cfg.method}")
    if cfg.alpha.kind not in ALPHA_KINDS:
        raise ConfigValidationError(f"unknown alpha policy: {cfg.alpha.kind}")
    if not cfg.gamma > 0 or not math.isfinite(cfg.gamma):
        raise ConfigValidationError(f"{cfg.label}: gamma must be positive, got {cfg.gamma}")
    if cfg.iterations < 0:
        raise ConfigValidationError(f"{cfg.label}: iterations must be non-negative")
    if cfg.halt_tolerance < 0:
        raise ConfigValidationError(f"{cfg.label}: halt_tolerance must be non-negative")

    tau = problem.n if cfg.tau is None else cfg.tau
    if not 1 <= tau <= problem.n:
        raise ConfigValidationError(f"{cfg.label}: tau must lie in [1, {problem.n}], got {tau}")

    if cfg.method == METHOD_FEDPROX:
        if cfg.alpha.kind != ALPHA_CONSTANT or cfg.alpha.value not in (None, 1.0):
            raise ConfigValidationError(
                f"{cfg.label}: fedprox runs with alpha=1, got policy {cfg.alpha.label}"
            )
    elif cfg.method == METHOD_FEDEXP:
        if cfg.alpha.kind != ALPHA_FEDEXP:
            raise ConfigValidationError(
                f"{cfg.label}: the fedexp method needs the fedexp policy, got {cfg.alpha.label}"
            )
        if not problem.is_smooth:
            raise ConfigValidationError(f"{cfg.label}: fedexp needs differentiable clients")
        if cfg.alpha.local_steps < 1:
            raise ConfigValidationError(f"{cfg.label}: local_steps must be at least 1")
    elif cfg.method == METHOD_FEDEXPROX:
        if cfg.alpha.kind == ALPHA_FEDEXP:
            raise ConfigValidationError(f"{cfg.label}: the fedexp policy belongs to the fedexp method")
        if cfg.alpha.kind == ALPHA_GRADS_PRIME and not problem.is_smooth:
            raise ConfigValidationError(f"{cfg.label}: grads_prime needs L_max")

    if cfg.x0 is not None and len(cfg.x0) != problem.d:
        raise ConfigValidationError(
            f"{cfg.label}: x0 has length {len(cfg.x0)}, expected {problem.d}"
        )
    return tau


def _metrics(
    problem: FederatedProblem,
    ctx: EnvelopeContext,
    f_star: float,
    x: np.ndarray,
    proxes: Sequence[np.ndarray],
) -> RoundMetrics:
    """Return the suboptimality metrics of x."""
    envelope = 0.0
    for client, p in zip(ctx.clients, proxes):
        envelope += value_from_prox(client, ctx.gamma, x, p)
    return RoundMetrics(
        f_subopt=problem.value(x) - f_star,
        env_subopt=envelope / ctx.n - ctx.env_minimum,
        dist_sq=problem.solution_set.distance_sq(x),
    )


def _alpha_rule(problem: FederatedProblem, ctx: EnvelopeContext, cfg: AlgorithmConfig, tau: int) -> AlphaRule:
    """Return the per-round extrapolation rule for a FedExProx or FedProx run."""
    if cfg.method == METHOD_FEDPROX:
        return lambda x, proxes, S: 1.0

    kind = cfg.alpha.kind
    if kind == ALPHA_GRADS:
        return lambda x, proxes, S: alpha_grads(ctx, x, S, proxes)
    if kind == ALPHA_GRADS_PRIME:
        L_max = problem.L_max
        return lambda x, proxes, S: alpha_grads_prime(ctx, x, S, L_max, proxes)
    if kind == ALPHA_STOPS:
        return lambda x, proxes, S: alpha_stops(ctx, x, S, proxes)

    alpha = _constant_alpha(problem, ctx, cfg, tau)
    _LOGGER.debug("%s: constant alpha resolved to %.17g", cfg.label, alpha)
    return lambda x, proxes, S: alpha


def run(problem: FederatedProblem, cfg: AlgorithmConfig) -> RunTrace:
    """Execute cfg.iterations rounds and return the trace.

    Record k holds alpha_k and S_k of round k and the metrics of x_{k+1};
    the metrics of x_0 live on the trace as `initial`.

    Raises:
        ConfigValidationError: if the configuration is not admissible
        OracleFailureError: if a prox fails, with the round index attached
    """
    tau = validate_config(problem, cfg)
    ctx = EnvelopeContext(cfg.gamma, problem.clients)
    plan = SamplingPlan(n=problem.n, tau=tau, seed=cfg.seed)
    f_star = problem.optimal_value
    deviations: List[str] = []

    if cfg.method == METHOD_FEDEXP:
        local_steps = cfg.alpha.local_steps
        step_size = 1.0 / (6.0 * local_steps * problem.L_max)
        deviations.append(DEVIATION_FEDEXP_GUARD)
        rule = None
    else:
        rule = _alpha_rule(problem, ctx, cfg, tau)

    x = np.zeros(problem.d) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
    try:
        proxes = _all_proxes(ctx, x)
    except OracleFailureError as error:
        raise error.with_round(0) from error

    initial = _metrics(problem, ctx, f_star, x, proxes)
    records: List[RoundRecord] = []
    iterates: List[np.ndarray] = [x.copy()] if cfg.keep_iterates else []
    status = STATUS_COMPLETED

    _LOGGER.info(
        "Starting %s (%s): gamma=%g tau=%d/%d K=%d",
        cfg.label or cfg.method,
        cfg.alpha.label,
        cfg.gamma,
        tau,
        problem.n,
        cfg.iterations,
    )
    start = time.perf_counter()

    for k in range(cfg.iterations):
        S = sample_tau_nice(plan, k)
        try:
            if rule is None:
                locals_ = [
                    local_gradient_descent(ctx.clients[i], x, local_steps, step_size) for i in S
                ]
                alpha = alpha_fedexp([x - z for z in locals_])
                x_next = _extrapolate(x, locals_, alpha)
            else:
                alpha = rule(x, proxes, S)
                x_next = _extrapolate(x, [proxes[i] for i in S], alpha)
            proxes = _all_proxes(ctx, x_next)
        except ConvergedSignal as signal:
            _LOGGER.info("%s converged at round %d: %s", cfg.label or cfg.method, k, signal)
            status = STATUS_CONVERGED
            break
        except OracleFailureError as error:
            _LOGGER.error("Oracle failure in %s at round %d: %s", cfg.label or cfg.method, k, error)
            raise error.with_round(k) from error

        x = x_next
        metrics = _metrics(problem, ctx, f_star, x, proxes)
        records.append(
            RoundRecord(
                k=k,
                alpha_used=alpha,
                sampled=S,
                f_subopt=metrics.f_subopt,
                env_subopt=metrics.env_subopt,
                dist_sq_to_solution_set=metrics.dist_sq,
                wall_time=time.perf_counter() - start,
            )
        )
        if cfg.keep_iterates:
            iterates.append(x.copy())
        _LOGGER.debug(
            "Round %d: alpha=%.6g f_subopt=%.3e dist_sq=%.3e",
            k,
            alpha,
            metrics.f_subopt,
            metrics.dist_sq,
        )

        if cfg.halt_tolerance > 0 and metrics.f_subopt < cfg.halt_tolerance:
            _LOGGER.info(
                "%s reached f_subopt %.3e < %.1e at round %d",
                cfg.label or cfg.method,
                metrics.f_subopt,
                cfg.halt_tolerance,
                k,
            )
            status = STATUS_HALTED
            break

    return RunTrace(
        records=records,
        initial=initial,
        final_iterate=x,
        status=status,
        iterates=iterates,
        deviations=deviations,
    )


def log_trace_summary(trace: RunTrace, label: str) -> None:
    """Log a framed summary of a finished run."""
    _LOGGER.info("=" * 80)
    _LOGGER.info("RUN SUMMARY: %s", label)
    _LOGGER.info("=" * 80)
    _LOGGER.info("Status: %s", trace.status)
    _LOGGER.info("Rounds: %d", len(trace))
    _LOGGER.info(
        "Initial: f_subopt=%.6e env_subopt=%.6e dist_sq=%.6e",
        trace.initial.f_subopt,
        trace.initial.env_subopt,
        trace.initial.dist_sq,
    )
    if trace.records:
        last = trace.records[-1]
        _LOGGER.info(
            "Final:   f_subopt=%.6e env_subopt=%.6e dist_sq=%.6e",
            last.f_subopt,
            last.env_subopt,
            last.dist_sq_to_solution_set,
        )
        alphas = trace.alphas
        _LOGGER.info(
            "Alpha:   min=%.6g max=%.6g sum=%.6g",
            min(alphas),
            max(alphas),
            sum(alphas),
        )
        _LOGGER.info("Wall time: %.3f s", last.wall_time)
    for deviation in trace.deviations:
        _LOGGER.info("Deviation: %s", deviation)
    _LOGGER.info("=" * 80)
