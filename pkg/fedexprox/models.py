"""Data models for the FedExProx laboratory."""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .const import (
    ALPHA_CONSTANT,
    DEFAULT_HALT_TOLERANCE,
    DEFAULT_ITERATIONS,
    DEFAULT_OUTPUT_DIR,
    METHOD_FEDEXPROX,
    SAMPLING_FULL,
    SAMPLING_TAU_NICE,
    STATUS_COMPLETED,
)
from .objectives import ClientObjective


@dataclass
class SolutionSet:
    """The affine solution set {x : A x = b} of the stacked system."""

    matrix: np.ndarray
    rhs: np.ndarray
    pinv: np.ndarray
    reference: np.ndarray

    @property
    def residual(self) -> float:
        """Return ||A x_ref - b||."""
        return float(np.linalg.norm(self.matrix @ self.reference - self.rhs))

    def project(self, x: np.ndarray) -> np.ndarray:
        """Return the Euclidean projection of x onto the solution set."""
        return x - self.pinv @ (self.matrix @ x - self.rhs)

    def distance_sq(self, x: np.ndarray) -> float:
        """Return the squared distance from x to the solution set."""
        diff = x - self.project(x)
        return float(diff @ diff)


@dataclass
class FederatedProblem:
    """Representation of a federated problem with n client objectives."""

    clients: List[ClientObjective]
    d: int
    solution_set: SolutionSet
    interpolated: bool
    smoothness: List[Optional[float]]
    generator: str = ""
    params: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    anchor: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        """Return the number of clients."""
        return len(self.clients)

    @property
    def is_smooth(self) -> bool:
        """Return if every client has a smoothness constant."""
        return all(L is not None for L in self.smoothness)

    @property
    def L_max(self) -> Optional[float]:
        """Return max_i L_i, or None when some client is non-smooth."""
        if not self.is_smooth:
            return None
        return max(self.smoothness)

    @property
    def optimal_value(self) -> float:
        """Return inf f = mean of the client minima (interpolation regime)."""
        return sum(client.minimum() for client in self.clients) / self.n

    def value(self, x: np.ndarray) -> float:
        """Return f(x) = (1/n) sum f_i(x), summed in client order."""
        total = 0.0
        for client in self.clients:
            total += client.value(x)
        return total / self.n

    def closed_form_l_gamma(self, gamma: float) -> Optional[float]:
        """Return the closed-form L_gamma where the generator provides one."""
        theta = self.params.get("theta")
        if theta is None:
            return None
        return theta / (self.n * (1.0 + gamma * theta))


@dataclass
class AlphaPolicy:
    """Extrapolation policy: one of the ALPHA_* kinds."""

    kind: str = ALPHA_CONSTANT
    value: Optional[float] = None
    local_steps: int = 1

    @property
    def label(self) -> str:
        """Return a short human-readable label."""
        if self.kind == ALPHA_CONSTANT and self.value is not None:
            return f"{self.kind}({self.value:g})"
        if self.local_steps != 1:
            return f"{self.kind}(t={self.local_steps})"
        return self.kind


@dataclass
class SamplingPlan:
    """Client sampling plan: full participation or tau-nice."""

    n: int
    tau: int
    seed: int = 0

    @property
    def mode(self) -> str:
        """Return the sampling mode implied by tau."""
        return SAMPLING_FULL if self.tau == self.n else SAMPLING_TAU_NICE


@dataclass
class AlgorithmConfig:
    """Configuration of a single algorithm run."""

    label: str = ""
    method: str = METHOD_FEDEXPROX
    gamma: float = 1.0
    alpha: AlphaPolicy = field(default_factory=AlphaPolicy)
    tau: Optional[int] = None
    iterations: int = DEFAULT_ITERATIONS
    seed: int = 0
    halt_tolerance: float = DEFAULT_HALT_TOLERANCE
    theory_mode: bool = True
    keep_iterates: bool = False
    x0: Optional[List[float]] = None


@dataclass
class RoundMetrics:
    """Suboptimality metrics of one iterate."""

    f_subopt: float
    env_subopt: float
    dist_sq: float


@dataclass
class RoundRecord:
    """Trace row of round k: alpha and S_k used, metrics of x_{k+1}."""

    k: int
    alpha_used: float
    sampled: List[int]
    f_subopt: float
    env_subopt: float
    dist_sq_to_solution_set: float
    wall_time: float = 0.0


@dataclass
class RunTrace:
    """The outcome of one algorithm run."""

    records: List[RoundRecord]
    initial: RoundMetrics
    final_iterate: np.ndarray
    status: str = STATUS_COMPLETED
    iterates: List[np.ndarray] = field(default_factory=list)
    deviations: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        """Return the number of recorded rounds."""
        return len(self.records)

    @property
    def alphas(self) -> List[float]:
        """Return the extrapolation parameters used, in round order."""
        return [record.alpha_used for record in self.records]


@dataclass
class RateReport:
    """Theory-side constants for one (gamma, tau) pair."""

    gamma: float
    tau: int
    n: int
    L_max: Optional[float]
    L_gamma: float
    L_gamma_tau: float
    alpha_opt: float
    C_opt: Optional[float]
    C_grid: List[Tuple[float, float]]
    speedup_vs_fedprox: Optional[float]
    speedup_lower_bound: Optional[float]
    fedexp_worst_ratio_bounds: Optional[Tuple[float, float]]
    fedexp_gain: Optional[float]
    fedexp_worst_case: Optional[float] = None
    mu: Optional[float] = None
    strongly_convex_rate: Optional[float] = None
    smooth: bool = True

    def as_dict(self) -> Dict[str, Any]:
        """Return a JSON-serializable view of the report."""
        return {
            "gamma": self.gamma,
            "tau": self.tau,
            "n": self.n,
            "smooth": self.smooth,
            "L_max": self.L_max,
            "L_gamma": self.L_gamma,
            "L_gamma_tau": self.L_gamma_tau,
            "alpha_opt": self.alpha_opt,
            "C_opt": self.C_opt,
            "C_grid": [list(point) for point in self.C_grid],
            "speedup_vs_fedprox": self.speedup_vs_fedprox,
            "speedup_lower_bound": self.speedup_lower_bound,
            "fedexp_worst_ratio_bounds": (
                list(self.fedexp_worst_ratio_bounds)
                if self.fedexp_worst_ratio_bounds
                else None
            ),
            "fedexp_gain": self.fedexp_gain,
            "fedexp_worst_case": self.fedexp_worst_case,
            "mu": self.mu,
            "strongly_convex_rate": self.strongly_convex_rate,
        }


@dataclass
class ProblemSpec:
    """Generator name, parameters and seed, or a problem file path."""

    generator: Optional[str] = None
    params: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    path: Optional[str] = None


@dataclass
class ExperimentConfig:
    """Configuration of an experiment: one problem, several algorithm variants."""

    problem: ProblemSpec
    variants: List[AlgorithmConfig]
    iterations: int = DEFAULT_ITERATIONS
    halt_tolerance: float = DEFAULT_HALT_TOLERANCE
    output_dir: str = DEFAULT_OUTPUT_DIR
    echo_config: bool = True
    echo_problem: bool = False
    name: str = "experiment"


@dataclass
class MetricsRow:
    """A RoundRecord tagged with its run id and algorithm label."""

    run_id: str
    label: str
    record: RoundRecord

    @property
    def sort_key(self) -> Tuple[str, int]:
        """Return the (run id, k) ordering key."""
        return (self.run_id, self.record.k)


@dataclass
class TraceComparison:
    """Result of comparing two traces at a suboptimality threshold."""

    status: str
    speedup: Optional[float] = None
    rounds_a: Optional[int] = None
    rounds_b: Optional[int] = None


@dataclass
class ExperimentResult:
    """Files and traces produced by one experiment."""

    output_dir: str
    meta_path: str
    csv_paths: Dict[str, str] = field(default_factory=dict)
    traces: Dict[str, RunTrace] = field(default_factory=dict)
    reports: List[RateReport] = field(default_factory=list)
