"""Experiment runner: problems, concurrent runs, CSV traces and run metadata."""
from __future__ import annotations

import asyncio
import csv
import json
import logging
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from . import __version__
from .algorithms import log_trace_summary, run
from .config import experiment_from_dict
from .const import (
    ALPHA_CONSTANT,
    ALPHA_FEDEXP,
    ALPHA_GRADS,
    ALPHA_GRADS_PRIME,
    ALPHA_OPTIMAL,
    ALPHA_STOPS,
    CSV_HEADER,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_WORKERS,
    DEVIATION_MIN_NORM,
    EXIT_ORACLE_FAILURE,
    EXIT_UNEXPECTED,
    EXIT_VALIDATION,
    GENERATOR_EXAMPLE1,
    GENERATOR_FEASIBILITY,
    GENERATOR_REGRESSION,
    METHOD_FEDEXP,
    METHOD_FEDEXPROX,
    METHOD_FEDPROX,
    META_FILENAME,
    PRESET_ADAPTIVE,
    PRESET_ADAPTIVE_GAMMAS,
    PRESET_ADAPTIVE_PP,
    PRESET_ADAPTIVE_PP_TAU,
    PRESET_EXAMPLE1,
    PRESET_FEASIBILITY,
    PRESET_FEASIBILITY_SHAPE,
    PRESET_FEDEXP_LOCAL_STEPS,
    PRESET_FIG1,
    PRESET_FIG1_GAMMAS,
    PRESET_FULL_ITERATIONS,
    PRESET_PARTIAL,
    PRESET_PARTIAL_GAMMAS,
    PRESET_PARTIAL_TAUS,
    PRESET_REGRESSION_SHAPE,
    PRESET_STEP_SIZE_GAMMAS,
    PRESET_STEP_SIZES,
    PRESETS,
    PROBLEM_FILENAME,
    SCHEMA_CONFIG,
    SCHEMA_META,
    STATUS_INCOMPARABLE,
    STATUS_OK,
)
from .errors import (
    ConfigValidationError,
    ContractError,
    EstimationError,
    GenerationError,
    OracleFailureError,
)
from .models import (
    AlgorithmConfig,
    ExperimentConfig,
    ExperimentResult,
    FederatedProblem,
    MetricsRow,
    ProblemSpec,
    RateReport,
    RunTrace,
    TraceComparison,
)
from .problems import generate_problem, load_problem, save_problem
from .spectral import strong_convexity_constant
from .theory import adaptive_bounds, build_rate_report

_LOGGER = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_float(value: float) -> str:
    """Return the shortest decimal string that round-trips to value."""
    return repr(float(value))


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the command-line exit code."""
    if isinstance(error, (ConfigValidationError, ContractError, GenerationError)):
        return EXIT_VALIDATION
    if isinstance(error, (OracleFailureError, EstimationError)):
        return EXIT_ORACLE_FAILURE
    return EXIT_UNEXPECTED


def resolve_problem(spec: ProblemSpec) -> FederatedProblem:
    """Load the problem file or run the named generator."""
    if spec.path:
        return load_problem(spec.path)
    return generate_problem(spec.generator, spec.params, spec.seed)


def run_id_for(index: int, label: str) -> str:
    """Return a filesystem-safe run id, ordered by variant index."""
    slug = re.sub(r"[^A-Za-z0-9_.-]+", "_", label).strip("_") or "run"
    return f"{index:02d}-{slug}"


def metrics_rows(run_id: str, label: str, trace: RunTrace) -> List[MetricsRow]:
    """Return the trace rows tagged with their run id, ordered by k."""
    return [MetricsRow(run_id=run_id, label=label, record=record) for record in trace.records]


def write_trace_csv(path: PathLike, rows: Sequence[MetricsRow]) -> Path:
    """Write one run's rows as CSV with full round-trip precision."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in sorted(rows, key=lambda item: item.sort_key):
            record = row.record
            writer.writerow(
                [
                    record.k,
                    format_float(record.f_subopt),
                    format_float(record.env_subopt),
                    format_float(record.dist_sq_to_solution_set),
                    format_float(record.alpha_used),
                    ";".join(str(i) for i in record.sampled),
                ]
            )
    return path


def read_trace_csv(path: PathLike) -> List[Tuple[int, float]]:
    """Return (k, f_subopt) pairs from a trace CSV."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames != CSV_HEADER:
                raise ConfigValidationError(f"{path}: unexpected CSV header {reader.fieldnames}")
            return [(int(row["k"]), float(row["f_subopt"])) for row in reader]
    except OSError as error:
        raise ConfigValidationError(f"cannot read trace {path}: {error}") from error


def _first_crossing(points: Sequence[Tuple[int, float]], threshold: float) -> Optional[int]:
    """Return the first rounds count whose f_subopt is <= threshold.

    points are (rounds completed, f_subopt) pairs; (0, f(x_0)) counts as zero rounds.
    """
    for rounds, f_subopt in points:
        if f_subopt <= threshold:
            return rounds
    return None


def _compare(
    points_a: Sequence[Tuple[int, float]],
    points_b: Sequence[Tuple[int, float]],
    threshold: float,
) -> TraceComparison:
    """Compare two (rounds, f_subopt) sequences at a threshold."""
    rounds_a = _first_crossing(points_a, threshold)
    rounds_b = _first_crossing(points_b, threshold)
    if rounds_a is None or rounds_b is None:
        return TraceComparison(status=STATUS_INCOMPARABLE, rounds_a=rounds_a, rounds_b=rounds_b)
    if rounds_b == 0:
        speedup = 1.0 if rounds_a == 0 else math.inf
    else:
        speedup = rounds_a / rounds_b
    return TraceComparison(
        status=STATUS_OK,
        speedup=speedup,
        rounds_a=rounds_a,
        rounds_b=rounds_b,
    )


def compare_traces(csv_a: PathLike, csv_b: PathLike, threshold: float) -> TraceComparison:
    """Return (rounds a needs) / (rounds b needs) to reach f_subopt <= threshold."""
    return _compare(
        [(k + 1, f_subopt) for k, f_subopt in read_trace_csv(csv_a)],
        [(k + 1, f_subopt) for k, f_subopt in read_trace_csv(csv_b)],
        threshold,
    )


def _trace_points(trace: RunTrace) -> List[Tuple[int, float]]:
    """Return the (rounds, f_subopt) pairs of a trace, starting from x_0."""
    return [(0, trace.initial.f_subopt)] + [(record.k + 1, record.f_subopt) for record in trace.records]


def compare_runs(trace_a: RunTrace, trace_b: RunTrace, threshold: float) -> TraceComparison:
    """Compare two in-memory traces; unlike a CSV, a trace also knows f(x_0)."""
    return _compare(_trace_points(trace_a), _trace_points(trace_b), threshold)


def _prepare_problem(problem: FederatedProblem, variants: Sequence[AlgorithmConfig]) -> None:
    """Populate every lazy cache before runs share the problem across workers."""
    for gamma in sorted({variant.gamma for variant in variants}):
        for client in problem.clients:
            client.prepare(gamma)
    for client in problem.clients:
        client.minimum()


def _strong_convexity(problem: FederatedProblem) -> Optional[float]:
    """Return mu when the stacked system has full column rank, else None."""
    if not problem.is_smooth or problem.solution_set.matrix.shape[0] < problem.d:
        return None
    try:
        return strong_convexity_constant(problem)
    except EstimationError as error:
        _LOGGER.debug("No strong convexity constant: %s", error)
        return None


def _rate_reports(
    problem: FederatedProblem, variants: Sequence[AlgorithmConfig]
) -> Dict[Tuple[float, int], RateReport]:
    """Return one RateReport per distinct (gamma, tau) pair."""
    mu = _strong_convexity(problem)
    reports: Dict[Tuple[float, int], RateReport] = {}
    for variant in variants:
        tau = problem.n if variant.tau is None else variant.tau
        key = (variant.gamma, tau)
        if key not in reports:
            reports[key] = build_rate_report(problem, variant.gamma, tau, mu=mu)
    return reports


def _json_value(value: float) -> Any:
    """Return a JSON-safe float; non-finite values become strings."""
    return value if math.isfinite(value) else repr(value)


def _metrics_dict(f_subopt: float, env_subopt: float, dist_sq: float) -> Dict[str, Any]:
    """Return a metrics block for meta.json."""
    return {
        "f_subopt": _json_value(f_subopt),
        "env_subopt": _json_value(env_subopt),
        "dist_sq": _json_value(dist_sq),
    }


def _run_meta(
    run_id: str,
    variant: AlgorithmConfig,
    trace: RunTrace,
    csv_path: Path,
    report: RateReport,
) -> Dict[str, Any]:
    """Return the meta.json entry of one run."""
    final = None
    wall_time = 0.0
    if trace.records:
        last = trace.records[-1]
        final = _metrics_dict(last.f_subopt, last.env_subopt, last.dist_sq_to_solution_set)
        wall_time = last.wall_time
    return {
        "run_id": run_id,
        "label": variant.label,
        "method": variant.method,
        "alpha_policy": variant.alpha.label,
        "gamma": variant.gamma,
        "tau": report.tau,
        "seed": variant.seed,
        "iterations": variant.iterations,
        "status": trace.status,
        "rounds": len(trace),
        "initial": _metrics_dict(
            trace.initial.f_subopt, trace.initial.env_subopt, trace.initial.dist_sq
        ),
        "final": final,
        "wall_time": wall_time,
        "alpha_sum": sum(trace.alphas),
        "deviations": trace.deviations,
        "csv": csv_path.name,
        "rate_report": {"gamma": report.gamma, "tau": report.tau},
        "adaptive_bounds": adaptive_bounds(
            variant.alpha.kind,
            variant.gamma,
            report.L_max,
            report.L_gamma,
            sum(trace.alphas),
            len(trace),
            report.tau < report.n,
        ),
    }


def _config_echo(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Return the experiment configuration as written to meta.json."""
    return {
        "name": cfg.name,
        "problem": {
            "generator": cfg.problem.generator,
            "params": cfg.problem.params,
            "seed": cfg.problem.seed,
            "path": cfg.problem.path,
        },
        "iterations": cfg.iterations,
        "halt_tolerance": cfg.halt_tolerance,
        "variants": [
            {
                "label": variant.label,
                "method": variant.method,
                "gamma": variant.gamma,
                "alpha": {
                    "kind": variant.alpha.kind,
                    "value": variant.alpha.value,
                    "local_steps": variant.alpha.local_steps,
                },
                "tau": variant.tau,
                "iterations": variant.iterations,
                "seed": variant.seed,
                "theory_mode": variant.theory_mode,
            }
            for variant in cfg.variants
        ],
    }


async def async_run_experiment(
    cfg: ExperimentConfig, workers: int = DEFAULT_WORKERS
) -> ExperimentResult:
    """Run every variant of an experiment and write CSV traces plus meta.json."""
    if not cfg.variants:
        raise ConfigValidationError("variants: at least one algorithm variant is required")

    output_dir = Path(cfg.output_dir)
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as error:
        raise ConfigValidationError(f"output directory {output_dir} is not writable: {error}") from error

    started = time.perf_counter()
    problem = resolve_problem(cfg.problem)
    _prepare_problem(problem, cfg.variants)
    reports = _rate_reports(problem, cfg.variants)

    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        jobs = [loop.run_in_executor(executor, run, problem, variant) for variant in cfg.variants]
        outcomes = await asyncio.gather(*jobs, return_exceptions=True)

    result = ExperimentResult(
        output_dir=str(output_dir),
        meta_path=str(output_dir / META_FILENAME),
        reports=list(reports.values()),
    )
    runs_meta: List[Dict[str, Any]] = []
    deviations: List[str] = []
    if problem.generator == GENERATOR_REGRESSION:
        deviations.append(DEVIATION_MIN_NORM)

    for index, (variant, outcome) in enumerate(zip(cfg.variants, outcomes)):
        run_id = run_id_for(index, variant.label)
        if isinstance(outcome, OracleFailureError):
            _LOGGER.error("Run %s failed: %s", run_id, outcome)
            raise OracleFailureError(
                f"run {run_id}: {outcome}",
                gamma=outcome.gamma,
                client_id=outcome.client_id,
                round_index=outcome.round_index,
            ) from outcome
        if isinstance(outcome, BaseException):
            _LOGGER.error("Run %s failed: %s", run_id, outcome)
            raise outcome

        trace: RunTrace = outcome
        log_trace_summary(trace, f"{run_id} ({variant.alpha.label})")
        csv_path = write_trace_csv(
            output_dir / f"{run_id}.csv", metrics_rows(run_id, variant.label, trace)
        )
        tau = problem.n if variant.tau is None else variant.tau
        runs_meta.append(_run_meta(run_id, variant, trace, csv_path, reports[(variant.gamma, tau)]))
        for deviation in trace.deviations:
            if deviation not in deviations:
                deviations.append(deviation)
        result.csv_paths[variant.label] = str(csv_path)
        result.traces[variant.label] = trace

    meta: Dict[str, Any] = {
        "schema": SCHEMA_META,
        "name": cfg.name,
        "version": __version__,
        "problem": {
            "generator": problem.generator,
            "params": problem.params,
            "seed": problem.seed,
            "n": problem.n,
            "d": problem.d,
            "interpolated": problem.interpolated,
            "L_i": problem.smoothness,
            "L_max": problem.L_max,
            "reference_residual": problem.solution_set.residual,
        },
        "rate_reports": [report.as_dict() for report in reports.values()],
        "runs": runs_meta,
        "deviations": deviations,
        "wall_time": time.perf_counter() - started,
    }
    if cfg.echo_config:
        meta["config"] = _config_echo(cfg)
    if cfg.echo_problem:
        save_problem(problem, output_dir / PROBLEM_FILENAME)
        meta["problem_file"] = PROBLEM_FILENAME

    Path(result.meta_path).write_text(json.dumps(meta, indent=2), encoding="utf-8")
    _LOGGER.info(
        "Experiment %s finished: %d runs written to %s", cfg.name, len(runs_meta), output_dir
    )
    return result


def run_experiment(cfg: ExperimentConfig, workers: int = DEFAULT_WORKERS) -> ExperimentResult:
    """Run an experiment to completion from synchronous code."""
    return asyncio.run(async_run_experiment(cfg, workers=workers))


def _variant(label: str, method: str, gamma: float, kind: str, **extra: Any) -> Dict[str, Any]:
    """Return one variant entry of a preset document."""
    alpha: Dict[str, Any] = {"kind": kind}
    if "value" in extra:
        alpha["value"] = extra.pop("value")
    if "local_steps" in extra:
        alpha["local_steps"] = extra.pop("local_steps")
    return {"label": label, "method": method, "gamma": gamma, "alpha": alpha, **extra}


def _override(overrides: Dict[str, Any], key: str, default: Any) -> Any:
    """Return an override, or the default when it was not given."""
    value = overrides.get(key)
    return default if value is None else value


def _regression_problem(overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Return the regression problem block with any shape overrides applied."""
    params = dict(PRESET_REGRESSION_SHAPE)
    if overrides.get("n") is not None:
        params["n"] = overrides["n"]
        params["d"] = max(params["d"], params["n"] * params["rows_per_client"])
    return {
        "generator": GENERATOR_REGRESSION,
        "params": params,
        "seed": _override(overrides, "seed", 0),
    }


def preset_document(name: str, **overrides: Any) -> Dict[str, Any]:
    """Return the configuration document of a named preset.

    Supported overrides: n, theta, gamma, seed, iterations.
    """
    if name not in PRESETS:
        raise ConfigValidationError(f"unknown preset: {name} (choose from {', '.join(PRESETS)})")

    gamma = overrides.get("gamma")
    iterations = overrides.get("iterations")
    variants: List[Dict[str, Any]] = []

    if name == PRESET_FIG1:
        problem = _regression_problem(overrides)
        for g in [gamma] if gamma is not None else PRESET_FIG1_GAMMAS:
            variants.append(_variant(f"fedprox-g{g:g}", METHOD_FEDPROX, g, ALPHA_CONSTANT))
            variants.append(_variant(f"fedexprox-g{g:g}", METHOD_FEDEXPROX, g, ALPHA_OPTIMAL))
        iterations = _override(overrides, "iterations", PRESET_FULL_ITERATIONS)

    elif name == PRESET_EXAMPLE1:
        n = _override(overrides, "n", 4)
        theta = _override(overrides, "theta", 1.0)
        problem = {"generator": GENERATOR_EXAMPLE1, "params": {"n": n, "theta": theta}}
        g = _override(overrides, "gamma", 1.0)
        x0 = [1.0] * n
        variants.append(_variant("fedprox", METHOD_FEDPROX, g, ALPHA_CONSTANT, x0=x0))
        variants.append(_variant("fedexprox", METHOD_FEDEXPROX, g, ALPHA_OPTIMAL, x0=x0))

    elif name == PRESET_PARTIAL:
        problem = _regression_problem(overrides)
        for g in [gamma] if gamma is not None else PRESET_PARTIAL_GAMMAS:
            for tau in PRESET_PARTIAL_TAUS:
                variants.append(
                    _variant(f"fedprox-g{g:g}-t{tau}", METHOD_FEDPROX, g, ALPHA_CONSTANT, tau=tau)
                )
                variants.append(
                    _variant(f"fedexprox-g{g:g}-t{tau}", METHOD_FEDEXPROX, g, ALPHA_OPTIMAL, tau=tau)
                )
        iterations = _override(overrides, "iterations", PRESET_FULL_ITERATIONS)

    elif name == PRESET_STEP_SIZES:
        problem = _regression_problem(overrides)
        for g in [gamma] if gamma is not None else PRESET_STEP_SIZE_GAMMAS:
            variants.append(_variant(f"fedexprox-g{g:g}", METHOD_FEDEXPROX, g, ALPHA_OPTIMAL))
        for steps in PRESET_FEDEXP_LOCAL_STEPS:
            variants.append(
                _variant(
                    f"fedexp-t{steps}",
                    METHOD_FEDEXP,
                    _override(overrides, "gamma", 1.0),
                    ALPHA_FEDEXP,
                    local_steps=steps,
                )
            )

    elif name in (PRESET_ADAPTIVE, PRESET_ADAPTIVE_PP):
        problem = _regression_problem(overrides)
        sampled = name == PRESET_ADAPTIVE_PP
        extra = {"tau": PRESET_ADAPTIVE_PP_TAU} if sampled else {}
        kinds = [ALPHA_GRADS, ALPHA_STOPS] if sampled else [ALPHA_GRADS, ALPHA_GRADS_PRIME, ALPHA_STOPS]
        for g in [gamma] if gamma is not None else PRESET_ADAPTIVE_GAMMAS:
            variants.append(_variant(f"optimal-g{g:g}", METHOD_FEDEXPROX, g, ALPHA_OPTIMAL, **extra))
            for kind in kinds:
                variants.append(_variant(f"{kind}-g{g:g}", METHOD_FEDEXPROX, g, kind, **extra))

    else:
        problem = {
            "generator": GENERATOR_FEASIBILITY,
            "params": dict(PRESET_FEASIBILITY_SHAPE),
            "seed": _override(overrides, "seed", 0),
        }
        g = _override(overrides, "gamma", 1.0)
        variants.append(_variant("rpm-alpha1", METHOD_FEDEXPROX, g, ALPHA_CONSTANT, value=1.0))
        variants.append(_variant("rpm-optimal", METHOD_FEDEXPROX, g, ALPHA_OPTIMAL))

    document: Dict[str, Any] = {
        "schema": SCHEMA_CONFIG,
        "name": name,
        "problem": problem,
        "variants": variants,
    }
    if iterations is not None:
        document["iterations"] = iterations
    return document


def build_preset(name: str, output_dir: str = DEFAULT_OUTPUT_DIR, **overrides: Any) -> ExperimentConfig:
    """Return the validated experiment configuration of a named preset."""
    return experiment_from_dict(preset_document(name, **overrides), output_dir=output_dir)
