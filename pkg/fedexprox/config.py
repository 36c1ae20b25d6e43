"""Experiment configuration: JSON schema and environment defaults."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Union

import voluptuous as vol
from dotenv import load_dotenv

from .const import (
    ALPHA_CONSTANT,
    ALPHA_FEDEXP,
    ALPHA_KINDS,
    DEFAULT_HALT_TOLERANCE,
    DEFAULT_ITERATIONS,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_WORKERS,
    ENV_LOG_LEVEL,
    ENV_OUTPUT_DIR,
    ENV_WORKERS,
    GENERATORS,
    METHOD_FEDEXP,
    METHOD_FEDEXPROX,
    METHOD_FEDPROX,
    METHODS,
    SCHEMA_CONFIG,
)
from .errors import ConfigValidationError
from .models import AlgorithmConfig, AlphaPolicy, ExperimentConfig, ProblemSpec

_LOGGER = logging.getLogger(__name__)

POSITIVE_FLOAT = vol.All(vol.Coerce(float), vol.Range(min=0, min_included=False))

ALPHA_SCHEMA = vol.Schema(
    {
        vol.Optional("kind"): vol.In(ALPHA_KINDS),
        vol.Optional("value"): POSITIVE_FLOAT,
        vol.Optional("local_steps", default=1): vol.All(int, vol.Range(min=1)),
    }
)

VARIANT_SCHEMA = vol.Schema(
    {
        vol.Optional("label", default=""): str,
        vol.Optional("method", default=METHOD_FEDEXPROX): vol.In(METHODS),
        vol.Required("gamma"): POSITIVE_FLOAT,
        vol.Optional("alpha", default={}): ALPHA_SCHEMA,
        vol.Optional("tau"): vol.All(int, vol.Range(min=1)),
        vol.Optional("iterations"): vol.All(int, vol.Range(min=1)),
        vol.Optional("seed", default=0): vol.All(int, vol.Range(min=0)),
        vol.Optional("theory_mode", default=True): bool,
        vol.Optional("x0"): [vol.Coerce(float)],
    }
)

PROBLEM_SPEC_SCHEMA = vol.Any(
    vol.Schema(
        {
            vol.Required("generator"): vol.In(GENERATORS),
            vol.Optional("params", default={}): {str: vol.Any(int, float)},
            vol.Optional("seed", default=0): vol.All(int, vol.Range(min=0)),
        }
    ),
    vol.Schema({vol.Required("path"): str}),
)

CONFIG_SCHEMA = vol.Schema(
    {
        vol.Required("schema"): SCHEMA_CONFIG,
        vol.Optional("name", default="experiment"): str,
        vol.Required("problem"): PROBLEM_SPEC_SCHEMA,
        vol.Required("variants"): vol.All(list, vol.Length(min=1), [VARIANT_SCHEMA]),
        vol.Optional("iterations", default=DEFAULT_ITERATIONS): vol.All(int, vol.Range(min=1)),
        vol.Optional("halt_tolerance", default=DEFAULT_HALT_TOLERANCE): vol.All(
            vol.Coerce(float), vol.Range(min=0)
        ),
        vol.Optional("output_dir"): str,
        vol.Optional("echo_config", default=True): bool,
        vol.Optional("echo_problem", default=False): bool,
    }
)


@dataclass
class EnvironmentConfig:
    """Defaults read from the environment or a .env file."""

    output_dir: str = DEFAULT_OUTPUT_DIR
    log_level: str = "INFO"
    workers: int = DEFAULT_WORKERS


def load_environment() -> EnvironmentConfig:
    """Load defaults from a .env file or environment variables."""
    load_dotenv()

    workers = os.getenv(ENV_WORKERS, str(DEFAULT_WORKERS))
    try:
        workers_count = max(1, int(workers))
    except ValueError as error:
        raise ConfigValidationError(f"{ENV_WORKERS} must be an integer, got {workers!r}") from error

    return EnvironmentConfig(
        output_dir=os.getenv(ENV_OUTPUT_DIR, DEFAULT_OUTPUT_DIR),
        log_level=os.getenv(ENV_LOG_LEVEL, "INFO").upper(),
        workers=workers_count,
    )


def _format_invalid(error: vol.Invalid) -> str:
    """Return a one-line reason for a schema violation."""
    path = ".".join(str(part) for part in error.path) or "<root>"
    return f"{path}: {error.msg}"


def experiment_from_dict(data: Dict[str, Any], output_dir: str = DEFAULT_OUTPUT_DIR) -> ExperimentConfig:
    """Validate a configuration document and build the experiment."""
    try:
        data = CONFIG_SCHEMA(data)
    except vol.MultipleInvalid as error:
        raise ConfigValidationError(_format_invalid(error.errors[0])) from error
    except vol.Invalid as error:
        raise ConfigValidationError(_format_invalid(error)) from error

    problem = data["problem"]
    spec = ProblemSpec(
        generator=problem.get("generator"),
        params=dict(problem.get("params", {})),
        seed=problem.get("seed", 0),
        path=problem.get("path"),
    )

    iterations = data["iterations"]
    variants = []
    for index, variant in enumerate(data["variants"]):
        alpha = variant["alpha"]
        method = variant["method"]
        kind = alpha.get("kind", ALPHA_FEDEXP if method == METHOD_FEDEXP else ALPHA_CONSTANT)
        if kind == ALPHA_CONSTANT and "value" not in alpha and method == METHOD_FEDEXPROX:
            raise ConfigValidationError(f"variants.{index}.alpha: constant policy needs a value")
        if method == METHOD_FEDPROX and (kind != ALPHA_CONSTANT or alpha.get("value", 1.0) != 1.0):
            raise ConfigValidationError(f"variants.{index}.alpha: fedprox runs with alpha=1")
        if (method == METHOD_FEDEXP) != (kind == ALPHA_FEDEXP):
            raise ConfigValidationError(
                f"variants.{index}.alpha: the fedexp policy and the fedexp method go together"
            )
        label = variant["label"] or f"{variant['method']}-{index}"
        variants.append(
            AlgorithmConfig(
                label=label,
                method=method,
                gamma=variant["gamma"],
                alpha=AlphaPolicy(
                    kind=kind,
                    value=alpha.get("value"),
                    local_steps=alpha["local_steps"],
                ),
                tau=variant.get("tau"),
                iterations=variant.get("iterations", iterations),
                seed=variant["seed"],
                halt_tolerance=data["halt_tolerance"],
                theory_mode=variant["theory_mode"],
                x0=variant.get("x0"),
            )
        )

    labels = [variant.label for variant in variants]
    if len(set(labels)) != len(labels):
        raise ConfigValidationError(f"variants: labels must be unique, got {labels}")

    return ExperimentConfig(
        problem=spec,
        variants=variants,
        iterations=iterations,
        halt_tolerance=data["halt_tolerance"],
        output_dir=data.get("output_dir", output_dir),
        echo_config=data["echo_config"],
        echo_problem=data["echo_problem"],
        name=data["name"],
    )


def load_experiment_config(
    path: Union[str, Path], output_dir: str = DEFAULT_OUTPUT_DIR
) -> ExperimentConfig:
    """Read and validate a "fedexprox-config/v1" JSON file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as error:
        raise ConfigValidationError(f"cannot read config file {path}: {error}") from error
    if not isinstance(data, dict):
        raise ConfigValidationError(f"config file {path} must hold a JSON object")
    _LOGGER.debug("Loaded experiment config from %s", path)
    return experiment_from_dict(data, output_dir=output_dir)
