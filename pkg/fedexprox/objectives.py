"""Client objectives and their exact proximal oracles."""
from __future__ import annotations

import logging
import math
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .const import (
    FEASIBILITY_TOLERANCE,
    OBJECTIVE_AFFINE_INDICATOR,
    OBJECTIVE_QUADRATIC,
    POWER_ITERATION_MAX_ITER,
    POWER_ITERATION_TOLERANCE,
)
from .errors import ContractError, OracleFailureError
from .spectral import power_iteration

_LOGGER = logging.getLogger(__name__)

Factor = Tuple[np.ndarray, bool]


def _as_matrix(value, name: str) -> np.ndarray:
    """Return a finite 2-D float array or raise a contract error."""
    matrix = np.array(value, dtype=float, ndmin=2)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise ContractError(f"{name} must be a non-empty matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ContractError(f"{name} has non-finite entries")
    return matrix


def _as_vector(value, length: int, name: str) -> np.ndarray:
    """Return a finite 1-D float array of the given length."""
    vector = np.array(value, dtype=float).reshape(-1)
    if vector.shape[0] != length:
        raise ContractError(f"{name} must have length {length}, got {vector.shape[0]}")
    if not np.all(np.isfinite(vector)):
        raise ContractError(f"{name} has non-finite entries")
    return vector


class ClientObjective:
    """One client's objective f_i together with its proximal oracle."""

    kind: str = ""

    def __init__(self, client_id: int, d: int) -> None:
        """Initialize the common client fields."""
        self.client_id = client_id
        self.d = d

    def _check_point(self, x: np.ndarray) -> np.ndarray:
        """Validate a query point against the client dimension."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ContractError(
                f"Client {self.client_id} expects a vector of length {self.d}, "
                f"got shape {x.shape}"
            )
        return x

    @staticmethod
    def _check_gamma(gamma: float) -> float:
        """Validate a prox step size."""
        if not gamma > 0 or not math.isfinite(gamma):
            raise ContractError(f"gamma must be positive and finite, got {gamma}")
        return float(gamma)

    def prepare(self, gamma: float) -> None:
        """Populate any factorization cache for the given step size."""

    def prox(self, gamma: float, x: np.ndarray) -> np.ndarray:
        """Return Prox_{gamma f_i}(x)."""
        raise NotImplementedError

    def value(self, x: np.ndarray) -> float:
        """Return f_i(x), possibly +inf."""
        raise NotImplementedError

    def smoothness(self) -> Optional[float]:
        """Return L_i, or None for non-smooth objectives."""
        raise NotImplementedError

    def minimum(self) -> float:
        """Return inf f_i."""
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Return the gradient of f_i at x."""
        raise ContractError(f"Client {self.client_id} ({self.kind}) is not differentiable")

    def envelope_hessian_matvec(self, gamma: float, v: np.ndarray) -> np.ndarray:
        """Return the Hessian of the Moreau envelope M^gamma_{f_i} applied to v."""
        raise NotImplementedError


class QuadraticObjective(ClientObjective):
    """Least-squares client f_i(x) = 1/2 ||A x - b||^2."""

    kind = OBJECTIVE_QUADRATIC

    def __init__(self, A, b, client_id: int = 0) -> None:
        """Initialize the quadratic client."""
        self.A = _as_matrix(A, "A")
        super().__init__(client_id, self.A.shape[1])
        self.b = _as_vector(b, self.A.shape[0], "b")
        self.m = self.A.shape[0]
        self._gram = self.A.T @ self.A
        self._atb = self.A.T @ self.b
        self._factors: Dict[float, Factor] = {}
        self._smoothness: Optional[float] = None
        self._minimum: Optional[float] = None

    def factor(self, gamma: float) -> Factor:
        """Return the cached Cholesky factor of (A^T A + I/gamma)."""
        gamma = self._check_gamma(gamma)
        cached = self._factors.get(gamma)
        if cached is not None:
            return cached

        system = self._gram + np.eye(self.d) / gamma
        try:
            cached = cho_factor(system)
        except LinAlgError as error:
            _LOGGER.error(
                "Prox factorization failed for client %d at gamma=%g: %s",
                self.client_id,
                gamma,
                error,
            )
            raise OracleFailureError(
                f"Prox factorization failed for client {self.client_id} "
                f"at gamma={gamma}: {error}",
                gamma=gamma,
                client_id=self.client_id,
            ) from error

        _LOGGER.debug("Cached prox factorization for client %d at gamma=%g", self.client_id, gamma)
        self._factors[gamma] = cached
        return cached

    def prepare(self, gamma: float) -> None:
        """Populate the factorization cache for the given step size."""
        self.factor(gamma)

    def prox(self, gamma: float, x: np.ndarray) -> np.ndarray:
        """Return (A^T A + I/gamma)^{-1} (A^T b + x/gamma)."""
        x = self._check_point(x)
        factor = self.factor(gamma)
        return cho_solve(factor, self._atb + x / gamma)

    def value(self, x: np.ndarray) -> float:
        """Return 1/2 ||A x - b||^2."""
        x = self._check_point(x)
        residual = self.A @ x - self.b
        return 0.5 * float(residual @ residual)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Return A^T (A x - b)."""
        x = self._check_point(x)
        return self.A.T @ (self.A @ x - self.b)

    def smoothness(
        self,
        tol: float = POWER_ITERATION_TOLERANCE,
        max_iter: int = POWER_ITERATION_MAX_ITER,
    ) -> float:
        """Return L_i = lambda_max(A^T A) by power iteration."""
        if self._smoothness is None:
            lam, _ = power_iteration(lambda v: self._gram @ v, self.d, tol=tol, max_iter=max_iter)
            self._smoothness = lam
        return self._smoothness

    def least_squares_point(self) -> np.ndarray:
        """Return the min-norm least-squares solution of A x = b."""
        solution, *_ = np.linalg.lstsq(self.A, self.b, rcond=None)
        return solution

    def minimum(self) -> float:
        """Return inf f_i, evaluated at the min-norm least-squares point."""
        if self._minimum is None:
            self._minimum = self.value(self.least_squares_point())
        return self._minimum

    def envelope_hessian_matvec(self, gamma: float, v: np.ndarray) -> np.ndarray:
        """Return (1/gamma)(v - (1/gamma)(A^T A + I/gamma)^{-1} v)."""
        factor = self.factor(gamma)
        return (v - cho_solve(factor, v) / gamma) / gamma


class AffineIndicatorObjective(ClientObjective):
    """Indicator of the affine set {x : C x = e}."""

    kind = OBJECTIVE_AFFINE_INDICATOR

    def __init__(self, C, e, client_id: int = 0) -> None:
        """Initialize the indicator client; C must have full row rank."""
        self.C = _as_matrix(C, "C")
        super().__init__(client_id, self.C.shape[1])
        self.e = _as_vector(e, self.C.shape[0], "e")
        self.p = self.C.shape[0]
        if np.linalg.matrix_rank(self.C) < self.p:
            raise ContractError(f"Client {client_id}: constraint matrix C must have full row rank")
        try:
            self._row_factor = cho_factor(self.C @ self.C.T)
        except LinAlgError as error:
            raise ContractError(
                f"Client {client_id}: C C^T is not positive definite: {error}"
            ) from error

    def project(self, x: np.ndarray) -> np.ndarray:
        """Return x - C^T (C C^T)^{-1} (C x - e)."""
        x = self._check_point(x)
        return x - self.C.T @ cho_solve(self._row_factor, self.C @ x - self.e)

    def prox(self, gamma: float, x: np.ndarray) -> np.ndarray:
        """Return the projection onto the set; independent of gamma."""
        self._check_gamma(gamma)
        return self.project(x)

    def value(self, x: np.ndarray) -> float:
        """Return 0 on the set (within tolerance) and +inf off it."""
        x = self._check_point(x)
        violation = np.max(np.abs(self.C @ x - self.e))
        return 0.0 if violation <= FEASIBILITY_TOLERANCE else math.inf

    def smoothness(self, **kwargs) -> None:
        """Indicators are not smooth."""
        return None

    def minimum(self) -> float:
        """The set is nonempty, so the minimum is 0."""
        return 0.0

    def envelope_hessian_matvec(self, gamma: float, v: np.ndarray) -> np.ndarray:
        """Return (1/gamma) C^T (C C^T)^{-1} C v."""
        gamma = self._check_gamma(gamma)
        return self.C.T @ cho_solve(self._row_factor, self.C @ v) / gamma


def prox(obj: ClientObjective, gamma: float, x: np.ndarray) -> np.ndarray:
    """Return Prox_{gamma f_i}(x) for any client objective."""
    return obj.prox(gamma, x)


def objective_value(obj: ClientObjective, x: np.ndarray) -> float:
    """Return f_i(x); indicators report +inf off their set."""
    return obj.value(x)


def smoothness_constant(obj: ClientObjective) -> Optional[float]:
    """Return L_i, or None for non-smooth objectives."""
    return obj.smoothness()
