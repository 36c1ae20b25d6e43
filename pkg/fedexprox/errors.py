"""Exceptions raised by the FedExProx laboratory."""
from typing import Optional


class FedExProxError(Exception):
    """Exception to indicate a general laboratory error."""


class ContractError(FedExProxError):
    """Exception to indicate a violated precondition or dimension mismatch."""


class OracleFailureError(FedExProxError):
    """Exception to indicate that a proximal oracle could not be evaluated."""

    def __init__(
        self,
        message: str,
        gamma: Optional[float] = None,
        client_id: Optional[int] = None,
        round_index: Optional[int] = None,
    ) -> None:
        """Initialize the error with the failing oracle's coordinates."""
        super().__init__(message)
        self.gamma = gamma
        self.client_id = client_id
        self.round_index = round_index

    def with_round(self, round_index: int) -> "OracleFailureError":
        """Return a copy of the error with the round index attached."""
        return OracleFailureError(
            f"round {round_index}: {self}",
            gamma=self.gamma,
            client_id=self.client_id,
            round_index=round_index,
        )


class EstimationError(FedExProxError):
    """Exception to indicate that a spectral estimate did not converge."""

    def __init__(self, message: str, last_rayleigh: float) -> None:
        """Initialize the error with the last Rayleigh quotient."""
        super().__init__(message)
        self.last_rayleigh = last_rayleigh


class GenerationError(FedExProxError):
    """Exception to indicate that a generated problem is inconsistent."""


class ConfigValidationError(FedExProxError):
    """Exception to indicate an invalid experiment or algorithm configuration."""


class ConvergedSignal(Exception):
    """Raised when the averaged prox step vanishes and the run can stop."""
