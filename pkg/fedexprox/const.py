"""Constants for the FedExProx laboratory."""
from typing import Final

# Base component constants
DOMAIN: Final = "fedexprox"

# Schema identifiers
SCHEMA_PROBLEM: Final = "fedexprox-problem/v1"
SCHEMA_CONFIG: Final = "fedexprox-config/v1"
SCHEMA_META: Final = "fedexprox-meta/v1"

# Methods
METHOD_FEDPROX: Final = "fedprox"
METHOD_FEDEXPROX: Final = "fedexprox"
METHOD_FEDEXP: Final = "fedexp"
METHODS: Final = [METHOD_FEDPROX, METHOD_FEDEXPROX, METHOD_FEDEXP]

# Extrapolation policies
ALPHA_CONSTANT: Final = "constant"
ALPHA_OPTIMAL: Final = "optimal"
ALPHA_GRADS: Final = "grads"
ALPHA_GRADS_PRIME: Final = "grads_prime"
ALPHA_STOPS: Final = "stops"
ALPHA_FEDEXP: Final = "fedexp"
ALPHA_KINDS: Final = [
    ALPHA_CONSTANT,
    ALPHA_OPTIMAL,
    ALPHA_GRADS,
    ALPHA_GRADS_PRIME,
    ALPHA_STOPS,
    ALPHA_FEDEXP,
]

# Sampling modes
SAMPLING_FULL: Final = "full"
SAMPLING_TAU_NICE: Final = "tau-nice"

# Client objective kinds
OBJECTIVE_QUADRATIC: Final = "quadratic"
OBJECTIVE_AFFINE_INDICATOR: Final = "affine_indicator"

# Generators
GENERATOR_REGRESSION: Final = "regression"
GENERATOR_EXAMPLE1: Final = "example1"
GENERATOR_FEASIBILITY: Final = "feasibility"
GENERATOR_EXPLICIT: Final = "explicit"
GENERATORS: Final = [GENERATOR_REGRESSION, GENERATOR_EXAMPLE1, GENERATOR_FEASIBILITY]

# Run statuses
STATUS_COMPLETED: Final = "completed"
STATUS_CONVERGED: Final = "converged"
STATUS_HALTED: Final = "halted"
STATUS_INCOMPARABLE: Final = "incomparable"
STATUS_OK: Final = "ok"

# Numerical tolerances
FEASIBILITY_TOLERANCE: Final = 1e-9
POWER_ITERATION_TOLERANCE: Final = 1e-10
POWER_ITERATION_MAX_ITER: Final = 10_000
CONVERGED_THRESHOLD: Final = 1e-24
FEDEXP_DENOMINATOR_GUARD: Final = 1e-12
DEFAULT_HALT_TOLERANCE: Final = 1e-14
INTERPOLATION_RESIDUAL_TOLERANCE: Final = 1e-8
ALPHA_GRID_POINTS: Final = 10_001
REPORT_GRID_POINTS: Final = 101

# Feasibility generator regeneration
FEASIBILITY_PERTURBATION: Final = 1e-3
FEASIBILITY_MAX_PERTURBATIONS: Final = 20

# Harness defaults
DEFAULT_ITERATIONS: Final = 1000
DEFAULT_OUTPUT_DIR: Final = "runs"
DEFAULT_WORKERS: Final = 4
CSV_HEADER: Final = ["k", "f_subopt", "env_subopt", "dist_sq", "alpha_k", "sampled"]
META_FILENAME: Final = "meta.json"
PROBLEM_FILENAME: Final = "problem.json"

# Environment variables (.env)
ENV_OUTPUT_DIR: Final = "FEDEXPROX_OUTPUT_DIR"
ENV_LOG_LEVEL: Final = "FEDEXPROX_LOG_LEVEL"
ENV_WORKERS: Final = "FEDEXPROX_WORKERS"

# Exit codes
EXIT_OK: Final = 0
EXIT_UNEXPECTED: Final = 1
EXIT_VALIDATION: Final = 2
EXIT_ORACLE_FAILURE: Final = 3

# Presets
PRESET_FIG1: Final = "fig1"
PRESET_EXAMPLE1: Final = "example1"
PRESET_PARTIAL: Final = "partial"
PRESET_STEP_SIZES: Final = "step_sizes"
PRESET_ADAPTIVE: Final = "adaptive"
PRESET_ADAPTIVE_PP: Final = "adaptive_pp"
PRESET_FEASIBILITY: Final = "feasibility"
PRESETS: Final = [
    PRESET_FIG1,
    PRESET_EXAMPLE1,
    PRESET_PARTIAL,
    PRESET_STEP_SIZES,
    PRESET_ADAPTIVE,
    PRESET_ADAPTIVE_PP,
    PRESET_FEASIBILITY,
]

# Preset shapes
PRESET_REGRESSION_SHAPE: Final = {"n": 30, "rows_per_client": 20, "d": 900}
PRESET_FIG1_GAMMAS: Final = [0.01, 0.1, 1.0]
PRESET_PARTIAL_GAMMAS: Final = [0.0001, 0.001]
PRESET_PARTIAL_TAUS: Final = [10, 15, 20]
PRESET_STEP_SIZE_GAMMAS: Final = [0.0001, 0.001, 0.01, 1.0, 10.0, 100.0]
PRESET_FEDEXP_LOCAL_STEPS: Final = [1, 5, 10]
PRESET_ADAPTIVE_GAMMAS: Final = [0.05, 0.5, 5.0]
PRESET_ADAPTIVE_PP_TAU: Final = 10
PRESET_FEASIBILITY_SHAPE: Final = {"n": 3, "d": 10, "rows_per_set": 2}
PRESET_FULL_ITERATIONS: Final = 10_000

# ANSI color codes for terminal output
ANSI_GREEN: Final = "\033[92m"
ANSI_RED: Final = "\033[91m"
ANSI_YELLOW: Final = "\033[93m"
ANSI_BLUE: Final = "\033[94m"
ANSI_BOLD: Final = "\033[1m"
ANSI_RESET: Final = "\033[0m"

# Deviation notes echoed into meta.json
DEVIATION_FEDEXP_GUARD: Final = (
    "fedexp alpha uses an additive 1e-12 denominator guard and is floored at 1"
)
DEVIATION_MIN_NORM: Final = (
    "reference solution is the exact min-norm solve of the stacked system, "
    "not a long gradient-descent run"
)

# Startup message
STARTUP_MESSAGE: Final = f"""
-------------------------------------------------------------------
{DOMAIN}
Federated proximal-optimization laboratory
-------------------------------------------------------------------
"""
