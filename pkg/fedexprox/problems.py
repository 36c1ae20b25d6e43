"""Synthetic problem generators and reference solution sets."""
from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import voluptuous as vol

from .const import (
    FEASIBILITY_MAX_PERTURBATIONS,
    FEASIBILITY_PERTURBATION,
    GENERATOR_EXAMPLE1,
    GENERATOR_EXPLICIT,
    GENERATOR_FEASIBILITY,
    GENERATOR_REGRESSION,
    INTERPOLATION_RESIDUAL_TOLERANCE,
    OBJECTIVE_AFFINE_INDICATOR,
    OBJECTIVE_QUADRATIC,
    SCHEMA_PROBLEM,
)
from .errors import ConfigValidationError, ContractError, GenerationError
from .models import FederatedProblem, SolutionSet
from .objectives import AffineIndicatorObjective, ClientObjective, QuadraticObjective

_LOGGER = logging.getLogger(__name__)

_MATRIX = vol.All(list, vol.Length(min=1), [vol.All(list, vol.Length(min=1), [vol.Coerce(float)])])
_VECTOR = vol.All(list, [vol.Coerce(float)])

CLIENT_SCHEMA = vol.Any(
    vol.Schema(
        {
            vol.Required("id"): int,
            vol.Required("kind"): OBJECTIVE_QUADRATIC,
            vol.Required("A"): _MATRIX,
            vol.Required("b"): _VECTOR,
        }
    ),
    vol.Schema(
        {
            vol.Required("id"): int,
            vol.Required("kind"): OBJECTIVE_AFFINE_INDICATOR,
            vol.Required("C"): _MATRIX,
            vol.Required("e"): _VECTOR,
        }
    ),
)

PROBLEM_SCHEMA = vol.Schema(
    {
        vol.Required("schema"): SCHEMA_PROBLEM,
        vol.Required("d"): vol.All(int, vol.Range(min=1)),
        vol.Required("clients"): vol.All(list, vol.Length(min=1), [CLIENT_SCHEMA]),
        vol.Optional("generator", default=GENERATOR_EXPLICIT): str,
        vol.Optional("params", default={}): dict,
        vol.Optional("seed", default=None): vol.Any(None, int),
    }
)


def _generator(seed: int) -> np.random.Generator:
    """Return the counter-based stream used by every generator."""
    return np.random.Generator(np.random.Philox(seed))


def _stacked_system(clients: Sequence[ClientObjective]):
    """Stack every client's affine system into one (matrix, rhs) pair."""
    blocks, rhs = [], []
    for client in clients:
        if isinstance(client, QuadraticObjective):
            blocks.append(client.A)
            rhs.append(client.b)
        elif isinstance(client, AffineIndicatorObjective):
            blocks.append(client.C)
            rhs.append(client.e)
        else:
            raise ContractError(f"Unsupported client objective: {type(client).__name__}")
    return np.vstack(blocks), np.concatenate(rhs)


def build_solution_set(clients: Sequence[ClientObjective]) -> SolutionSet:
    """Return the solution set of the stacked system with its min-norm point."""
    matrix, rhs = _stacked_system(clients)
    pinv = np.linalg.pinv(matrix)
    return SolutionSet(matrix=matrix, rhs=rhs, pinv=pinv, reference=pinv @ rhs)


def problem_from_clients(
    clients: Sequence[ClientObjective],
    generator: str = GENERATOR_EXPLICIT,
    params: Optional[Dict[str, Any]] = None,
    seed: Optional[int] = None,
    anchor: Optional[np.ndarray] = None,
) -> FederatedProblem:
    """Build a federated problem from explicit client objectives."""
    if not clients:
        raise ContractError("A federated problem needs at least one client")
    dims = {client.d for client in clients}
    if len(dims) != 1:
        raise ContractError(f"Clients disagree on the dimension: {sorted(dims)}")
    ids = [client.client_id for client in clients]
    if len(set(ids)) != len(ids):
        raise ContractError(f"Client ids must be unique, got {ids}")

    solution_set = build_solution_set(clients)
    scale = 1.0 + float(np.linalg.norm(solution_set.rhs))
    interpolated = solution_set.residual <= INTERPOLATION_RESIDUAL_TOLERANCE * scale
    if not interpolated:
        _LOGGER.warning(
            "Stacked system is inconsistent (residual %.3e); suboptimality metrics assume interpolation",
            solution_set.residual,
        )

    problem = FederatedProblem(
        clients=list(clients),
        d=dims.pop(),
        solution_set=solution_set,
        interpolated=interpolated,
        smoothness=[client.smoothness() for client in clients],
        generator=generator,
        params=dict(params or {}),
        seed=seed,
        anchor=anchor,
    )
    _LOGGER.info(
        "Built %s problem: n=%d, d=%d, interpolated=%s",
        generator,
        problem.n,
        problem.d,
        interpolated,
    )
    return problem


def gen_regression(n: int, rows_per_client: int, d: int, seed: int) -> FederatedProblem:
    """Generate an overparameterized least-squares problem with U[0,1) data.

    Raises:
        ContractError: if d < n * rows_per_client
        GenerationError: if the stacked system turns out inconsistent
    """
    if n < 1 or rows_per_client < 1 or d < 1:
        raise ContractError(f"Invalid regression shape n={n}, rows={rows_per_client}, d={d}")
    if d < n * rows_per_client:
        raise ContractError(
            f"Regression needs d >= n * rows_per_client for interpolation, got d={d} < {n * rows_per_client}"
        )

    rng = _generator(seed)
    clients: List[ClientObjective] = []
    for i in range(n):
        A = rng.random((rows_per_client, d))
        b = rng.random(rows_per_client)
        clients.append(QuadraticObjective(A, b, client_id=i))

    problem = problem_from_clients(
        clients,
        generator=GENERATOR_REGRESSION,
        params={"n": n, "rows_per_client": rows_per_client, "d": d},
        seed=seed,
    )
    if not problem.interpolated:
        raise GenerationError(
            f"Regression instance with seed {seed} is not interpolated "
            f"(residual {problem.solution_set.residual:.3e})"
        )
    return problem


def gen_example1(n: int, theta: float) -> FederatedProblem:
    """Generate the separable family f_i(x) = (theta/2) x_i^2 with d = n."""
    if n < 1:
        raise ContractError(f"n must be positive, got {n}")
    if not theta > 0:
        raise ContractError(f"theta must be positive, got {theta}")

    root = math.sqrt(theta)
    clients: List[ClientObjective] = []
    for i in range(n):
        row = np.zeros((1, n))
        row[0, i] = root
        clients.append(QuadraticObjective(row, [0.0], client_id=i))

    return problem_from_clients(
        clients,
        generator=GENERATOR_EXAMPLE1,
        params={"n": n, "theta": float(theta)},
    )


def gen_feasibility(n: int, d: int, rows_per_set: int, seed: int) -> FederatedProblem:
    """Generate n random affine sets through a common random point.

    Rank-deficient constraint blocks are perturbed from the same stream
    until they have full row rank.
    """
    if n < 1 or rows_per_set < 1 or d < 1:
        raise ContractError(f"Invalid feasibility shape n={n}, d={d}, rows={rows_per_set}")
    if n * rows_per_set > d:
        raise ContractError(
            f"Feasibility needs n * rows_per_set <= d, got {n * rows_per_set} > {d}"
        )

    rng = _generator(seed)
    anchor = rng.random(d)
    clients: List[ClientObjective] = []
    for i in range(n):
        C = rng.random((rows_per_set, d))
        attempts = 0
        while np.linalg.matrix_rank(C) < rows_per_set:
            if attempts >= FEASIBILITY_MAX_PERTURBATIONS:
                raise GenerationError(
                    f"Constraint block {i} stayed rank deficient after {attempts} perturbations"
                )
            _LOGGER.debug("Perturbing rank-deficient constraint block %d", i)
            C = C + FEASIBILITY_PERTURBATION * rng.random(C.shape)
            attempts += 1
        clients.append(AffineIndicatorObjective(C, C @ anchor, client_id=i))

    return problem_from_clients(
        clients,
        generator=GENERATOR_FEASIBILITY,
        params={"n": n, "d": d, "rows_per_set": rows_per_set},
        seed=seed,
        anchor=anchor,
    )


def generate_problem(generator: str, params: Dict[str, Any], seed: int = 0) -> FederatedProblem:
    """Dispatch to a named generator."""
    try:
        if generator == GENERATOR_REGRESSION:
            return gen_regression(params["n"], params["rows_per_client"], params["d"], seed)
        if generator == GENERATOR_EXAMPLE1:
            return gen_example1(params["n"], params.get("theta", 1.0))
        if generator == GENERATOR_FEASIBILITY:
            return gen_feasibility(params["n"], params["d"], params["rows_per_set"], seed)
    except KeyError as error:
        raise ConfigValidationError(f"generator {generator} is missing parameter {error}") from error
    raise ConfigValidationError(f"unknown generator: {generator}")


def problem_to_dict(problem: FederatedProblem) -> Dict[str, Any]:
    """Return the versioned JSON document for a problem."""
    clients = []
    for client in problem.clients:
        if isinstance(client, QuadraticObjective):
            clients.append(
                {
                    "id": client.client_id,
                    "kind": client.kind,
                    "A": client.A.tolist(),
                    "b": client.b.tolist(),
                }
            )
        else:
            clients.append(
                {
                    "id": client.client_id,
                    "kind": client.kind,
                    "C": client.C.tolist(),
                    "e": client.e.tolist(),
                }
            )
    return {
        "schema": SCHEMA_PROBLEM,
        "d": problem.d,
        "generator": problem.generator,
        "params": problem.params,
        "seed": problem.seed,
        "clients": clients,
    }


def problem_from_dict(data: Dict[str, Any]) -> FederatedProblem:
    """Build a problem from its JSON document."""
    try:
        data = PROBLEM_SCHEMA(data)
    except vol.Invalid as error:
        raise ConfigValidationError(f"invalid problem document: {error}") from error

    clients: List[ClientObjective] = []
    for entry in data["clients"]:
        if entry["kind"] == OBJECTIVE_QUADRATIC:
            clients.append(QuadraticObjective(entry["A"], entry["b"], client_id=entry["id"]))
        else:
            clients.append(AffineIndicatorObjective(entry["C"], entry["e"], client_id=entry["id"]))

    if any(client.d != data["d"] for client in clients):
        raise ContractError(f"Client dimensions do not match d={data['d']}")

    return problem_from_clients(
        clients,
        generator=data["generator"],
        params=data["params"],
        seed=data["seed"],
    )


def save_problem(problem: FederatedProblem, path: Union[str, Path]) -> Path:
    """Write a problem to disk as "fedexprox-problem/v1" JSON."""
    path = Path(path)
    path.write_text(json.dumps(problem_to_dict(problem)), encoding="utf-8")
    _LOGGER.debug("Saved problem to %s", path)
    return path


def load_problem(path: Union[str, Path]) -> FederatedProblem:
    """Read a problem written by save_problem."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as error:
        raise ConfigValidationError(f"cannot read problem file {path}: {error}") from error
    return problem_from_dict(data)
