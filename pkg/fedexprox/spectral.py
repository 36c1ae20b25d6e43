"""Spectral estimation helpers for the FedExProx laboratory."""
import logging
from typing import Callable, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .const import POWER_ITERATION_MAX_ITER, POWER_ITERATION_TOLERANCE
from .errors import ContractError, EstimationError

_LOGGER = logging.getLogger(__name__)

MatVec = Callable[[np.ndarray], np.ndarray]


def _start_vector(matvec: MatVec, d: int) -> Tuple[np.ndarray, np.ndarray]:
    """Return a deterministic start vector that the operator does not annihilate.

    The all-ones direction is tried first; if it lies in the nullspace the unit
    vectors are tried in index order. A zero operator returns the all-ones
    vector with a zero image.
    """
    v = np.ones(d) / np.sqrt(d)
    w = matvec(v)
    if np.linalg.norm(w) > 0:
        return v, w

    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        w = matvec(e)
        if np.linalg.norm(w) > 0:
            _LOGGER.debug("All-ones start annihilated, restarting from e_%d", j)
            return e, w

    return v, w


def power_iteration(
    matvec: MatVec,
    d: int,
    tol: float = POWER_ITERATION_TOLERANCE,
    max_iter: int = POWER_ITERATION_MAX_ITER,
) -> Tuple[float, np.ndarray]:
    """Largest eigenpair of a symmetric positive semidefinite operator.

    Stops when successive Rayleigh quotients differ by at most
    tol * max(1, |lambda|).

    Raises:
        EstimationError: if the quotient has not settled within max_iter steps
    """
    if d < 1:
        raise ContractError(f"Dimension must be positive, got {d}")

    v, w = _start_vector(matvec, d)
    lam = float(v @ w)
    if np.linalg.norm(w) == 0:
        return 0.0, v

    for iteration in range(1, max_iter + 1):
        v = w / np.linalg.norm(w)
        w = matvec(v)
        lam_new = float(v @ w)
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            _LOGGER.debug(
                "Power iteration converged after %d steps: lambda=%.17g",
                iteration,
                lam_new,
            )
            return lam_new, v
        lam = lam_new
        if np.linalg.norm(w) == 0:
            return 0.0, v

    raise EstimationError(
        f"Power iteration did not converge within {max_iter} iterations",
        last_rayleigh=lam,
    )


def largest_eigenvalue(matrix: np.ndarray, **kwargs) -> float:
    """Largest eigenvalue of a dense symmetric positive semidefinite matrix."""
    matrix = np.asarray(matrix, dtype=float)
    lam, _ = power_iteration(lambda v: matrix @ v, matrix.shape[0], **kwargs)
    return lam


def smallest_eigenvalue(
    matrix: np.ndarray,
    tol: float = POWER_ITERATION_TOLERANCE,
    max_iter: int = POWER_ITERATION_MAX_ITER,
) -> float:
    """Smallest eigenvalue of a symmetric positive definite matrix.

    Uses inverse power iteration through a Cholesky factorization.

    Raises:
        EstimationError: if the matrix is not positive definite or the
            iteration does not converge
    """
    matrix = np.asarray(matrix, dtype=float)
    try:
        factor = cho_factor(matrix)
    except LinAlgError as error:
        raise EstimationError(
            f"Matrix is not positive definite: {error}", last_rayleigh=0.0
        ) from error

    lam_inv, _ = power_iteration(
        lambda v: cho_solve(factor, v), matrix.shape[0], tol=tol, max_iter=max_iter
    )
    if lam_inv <= 0:
        raise EstimationError("Inverse iteration returned a non-positive value", lam_inv)
    return 1.0 / lam_inv


def strong_convexity_constant(problem) -> float:
    """Return mu = lambda_min((1/n) sum A_i^T A_i) for an all-quadratic problem.

    Raises:
        ContractError: if a client has no data matrix
        EstimationError: if the averaged Gram matrix is singular
    """
    gram = np.zeros((problem.d, problem.d))
    for client in problem.clients:
        matrix = getattr(client, "A", None)
        if matrix is None:
            raise ContractError(
                f"Client {client.client_id} ({client.kind}) has no strong convexity constant"
            )
        gram = gram + matrix.T @ matrix
    mu = smallest_eigenvalue(gram / problem.n)
    _LOGGER.debug("Strong convexity constant mu=%.17g", mu)
    return mu
