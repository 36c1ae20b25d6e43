"""Moreau envelopes of client objectives and their averages."""
from __future__ import annotations

import logging
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ContractError
from .objectives import AffineIndicatorObjective, ClientObjective
from .spectral import power_iteration

_LOGGER = logging.getLogger(__name__)


class EnvelopeContext:
    """Step size, clients and cached envelope minima for M^gamma."""

    def __init__(self, gamma: float, clients: Sequence[ClientObjective]) -> None:
        """Initialize the context and populate every factorization cache."""
        if not gamma > 0:
            raise ContractError(f"gamma must be positive, got {gamma}")
        if not clients:
            raise ContractError("An envelope context needs at least one client")
        dims = {client.d for client in clients}
        if len(dims) != 1:
            raise ContractError(f"Clients disagree on the dimension: {sorted(dims)}")

        self.gamma = float(gamma)
        self.clients: List[ClientObjective] = list(clients)
        self.d = dims.pop()
        for client in self.clients:
            client.prepare(self.gamma)

        # inf M^gamma_{f_i} = inf f_i
        self.minima: List[float] = [client.minimum() for client in self.clients]

    @property
    def n(self) -> int:
        """Return the number of clients."""
        return len(self.clients)

    def client(self, i: int) -> ClientObjective:
        """Return client i, validating the index."""
        if not 0 <= i < self.n:
            raise ContractError(f"Client index {i} outside [0, {self.n})")
        return self.clients[i]

    @property
    def env_minimum(self) -> float:
        """Return inf M^gamma = mean of the per-client minima."""
        return sum(self.minima) / self.n


def value_from_prox(obj: ClientObjective, gamma: float, x: np.ndarray, p: np.ndarray) -> float:
    """Return M^gamma_{f_i}(x) given p = Prox_{gamma f_i}(x)."""
    diff = x - p
    # the projection lies on the set, the indicator term is 0
    head = 0.0 if isinstance(obj, AffineIndicatorObjective) else obj.value(p)
    return head + float(diff @ diff) / (2.0 * gamma)


def moreau_value(ctx: EnvelopeContext, i: int, x: np.ndarray) -> float:
    """Return M^gamma_{f_i}(x) = f_i(p) + ||x - p||^2 / (2 gamma)."""
    obj = ctx.client(i)
    x = np.asarray(x, dtype=float)
    return value_from_prox(obj, ctx.gamma, x, obj.prox(ctx.gamma, x))


def moreau_grad(ctx: EnvelopeContext, i: int, x: np.ndarray) -> np.ndarray:
    """Return grad M^gamma_{f_i}(x) = (x - p) / gamma."""
    obj = ctx.client(i)
    x = np.asarray(x, dtype=float)
    return (x - obj.prox(ctx.gamma, x)) / ctx.gamma


def average_envelope_value(ctx: EnvelopeContext, x: np.ndarray) -> float:
    """Return M^gamma(x), summed in ascending client order."""
    total = 0.0
    for i in range(ctx.n):
        total += moreau_value(ctx, i, x)
    return total / ctx.n


def average_envelope_grad(ctx: EnvelopeContext, x: np.ndarray) -> np.ndarray:
    """Return grad M^gamma(x), summed in ascending client order."""
    total = np.zeros(ctx.d)
    for i in range(ctx.n):
        total = total + moreau_grad(ctx, i, x)
    return total / ctx.n


def average_hessian_matvec(ctx: EnvelopeContext, v: np.ndarray) -> np.ndarray:
    """Return H v with H = (1/n) sum of the client envelope Hessians."""
    total = np.zeros(ctx.d)
    for client in ctx.clients:
        total = total + client.envelope_hessian_matvec(ctx.gamma, v)
    return total / ctx.n


def envelope_smoothness(ctx: EnvelopeContext) -> Tuple[float, List[float]]:
    """Return L_gamma and the per-client envelope smoothness constants.

    Per-client constants are L_i/(1 + gamma L_i) for quadratics and 1/gamma for
    non-smooth clients; mixing the two is a contract error. L_gamma is the
    largest eigenvalue of H, estimated by power iteration.
    """
    constants = [client.smoothness() for client in ctx.clients]
    smooth = [c is not None for c in constants]
    if any(smooth) and not all(smooth):
        raise ContractError("Envelope smoothness needs all clients smooth or none smooth")

    if all(smooth):
        per_client = [L / (1.0 + ctx.gamma * L) for L in constants]
    else:
        per_client = [1.0 / ctx.gamma] * ctx.n

    l_gamma, _ = power_iteration(lambda v: average_hessian_matvec(ctx, v), ctx.d)
    _LOGGER.debug("Envelope smoothness at gamma=%g: L_gamma=%.17g", ctx.gamma, l_gamma)
    return l_gamma, per_client
