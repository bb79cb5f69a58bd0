"""
Finite-difference validation of the solver Jacobian and of the end-to-end chain.

A trial is degenerate when a coordinate perturbation by h changes the piece of the
piecewise-smooth map (pooled groups, supports, clip branches or reward argmins);
such trials are resampled and counted instead of being scored.
"""
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.core.logger import logger
from src.models.configs import PredictorSpec, SolverConfig
from src.models.reports import GradcheckComponent, GradcheckReport
from src.models.schemas import ModelParams, TreeSolution
from src.services import model_core, reward_engine, tree_solver
from src.services.reference_oracles import finite_diff
from src.services.tree_topology import build_complete_tree
from src.utils.helpers import spawn_generators

FD_STEP = 1e-5
SOLVER_TOLERANCE = 1e-4
END_TO_END_TOLERANCE = 1e-3


def solution_signature(solution: TreeSolution, tol: float = 1e-12) -> Tuple:
    """Everything the local Jacobian depends on"""
    direct, through_a = tree_solver.jacobian_masks(solution, tol)
    supports = tuple(tuple(sorted(map(tuple, s.tolist()))) for s in solution.supports)
    interior = tuple(tol < v < 1.0 - tol for v in solution.group_values)
    return (
        tuple(solution.groups),
        supports,
        tuple(solution.clipped),
        interior,
        direct.tobytes(),
        through_a.tobytes(),
    )


@dataclass
class _Outcome:
    rel_err: float
    worst: Optional[List[int]]


class _PieceWatcher:
    """Wraps a scalar function and records whether any probe left the base piece"""

    def __init__(self, fn: Callable[[np.ndarray], Tuple[float, Tuple]], base_signature: Tuple):
        self._fn = fn
        self._base = base_signature
        self.left_piece = False

    def __call__(self, x: np.ndarray) -> float:
        value, signature = self._fn(x)
        if signature != self._base:
            self.left_piece = True
        return value


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> _Outcome:
    diff = np.abs(analytic - numeric)
    scale = max(1.0, float(np.max(np.abs(numeric))), float(np.max(np.abs(analytic))))
    worst = [int(i) for i in np.unravel_index(int(np.argmax(diff)), diff.shape)] if diff.size else None
    return _Outcome(rel_err=float(np.max(diff)) / scale if diff.size else 0.0, worst=worst)


def solver_trial(rng: np.random.Generator, depth: int = 2, n: int = 4) -> Optional[_Outcome]:
    """One random solver Jacobian check; None when the draw is degenerate"""
    topology = build_complete_tree(depth)
    config = SolverConfig(lam=float(rng.choice([0.5, 1.0, 2.0])))
    q = rng.uniform(-2.0, 2.0, size=(n, topology.num_nodes))
    grad_z = rng.standard_normal(q.shape)
    grad_a = rng.standard_normal(topology.num_nodes)

    base = tree_solver.solve(q, config, topology)
    analytic = tree_solver.backward(base, grad_z, grad_a, config, topology)

    def probe(x: np.ndarray):
        solution = tree_solver.solve(x, config, topology)
        value = float(np.sum(grad_z * solution.z) + grad_a @ solution.a)
        return value, solution_signature(solution)

    watcher = _PieceWatcher(probe, solution_signature(base))
    numeric = finite_diff(watcher, q, h=FD_STEP)
    if watcher.left_piece:
        return None
    return _relative_error(analytic, numeric)


def _random_params(rng, topology, num_features: int, output_dim: int) -> ModelParams:
    split = model_core.init_split_params(topology, num_features, rng)
    split.weights = rng.standard_normal(split.weights.shape)
    split.bias = 0.5 * rng.standard_normal(split.bias.shape)
    predictor = model_core.init_predictor_params(
        PredictorSpec(kind="linear"), num_features, topology.num_nodes, output_dim, rng
    )
    return ModelParams(split=split, predictor=predictor)


def end_to_end_trial(rng: np.random.Generator, depth: int = 2, n: int = 8, d: int = 3) -> Optional[_Outcome]:
    """One random dLoss/dtheta check through split values, rewards, solver and predictor"""
    topology = build_complete_tree(depth)
    config = SolverConfig(lam=1.0)
    X = rng.standard_normal((n, d))
    y = rng.standard_normal((n, 1))
    params = _random_params(rng, topology, d, 1)

    state = model_core.forward(params, X, topology, config)
    _, grad_out = model_core.loss_and_grad("mse", state.outputs, y)
    grads = model_core.backward(params, state, grad_out, topology, config)
    analytic = np.hstack((grads["split.weights"], grads["split.bias"][:, None]))
    theta = np.hstack((params.split.weights, params.split.bias[:, None]))

    def probe(x: np.ndarray):
        trial = params.copy()
        trial.split.weights = x[:, :d]
        trial.split.bias = x[:, d]
        probe_state = model_core.forward(trial, X, topology, config)
        loss, _ = model_core.loss_and_grad("mse", probe_state.outputs, y)
        signature = solution_signature(probe_state.solution) + (probe_state.rewards.argmin_node.tobytes(),)
        return loss, signature

    base_signature = solution_signature(state.solution) + (state.rewards.argmin_node.tobytes(),)
    watcher = _PieceWatcher(probe, base_signature)
    numeric = finite_diff(watcher, theta, h=FD_STEP)
    if watcher.left_piece:
        return None
    return _relative_error(analytic, numeric)


def _run_suite(name: str, trial_fn, rng, trials: int, tolerance: float, max_draws: int) -> GradcheckComponent:
    scored, resampled, draws = 0, 0, 0
    worst_err, worst_coord = 0.0, None
    while scored < trials and draws < max_draws:
        draws += 1
        outcome = trial_fn(rng)
        if outcome is None:
            resampled += 1
            continue
        scored += 1
        if outcome.rel_err >= worst_err:
            worst_err, worst_coord = outcome.rel_err, outcome.worst
    passed = scored == trials and worst_err < tolerance
    logger.info(f"{name}: max_rel_err={worst_err:.3e} trials={scored} resampled={resampled}")
    return GradcheckComponent(
        name=name,
        max_rel_err=worst_err,
        tolerance=tolerance,
        trials=scored,
        resampled=resampled,
        passed=passed,
        worst_coordinate=worst_coord,
    )


def run_gradcheck(seed: int = 0, trials: int = 50) -> GradcheckReport:
    """
    Solver-level and end-to-end finite-difference suites

    Args:
        seed: Run seed
        trials: Non-degenerate trials required per suite (0 gives a vacuous pass)
    """
    warnings = []
    if trials <= 0:
        message = "no trials requested; gradient check passes vacuously"
        logger.warning(message)
        warnings.append(message)
    rngs = spawn_generators(seed, ["solver", "end_to_end"])
    max_draws = max(20 * trials, 1) if trials > 0 else 0
    components = [
        _run_suite("solver_jacobian", solver_trial, rngs["solver"], trials, SOLVER_TOLERANCE, max_draws),
        _run_suite("end_to_end", end_to_end_trial, rngs["end_to_end"], trials, END_TO_END_TOLERANCE, max_draws),
    ]
    return GradcheckReport(
        seed=seed,
        trials=trials,
        passed=all(c.passed for c in components),
        components=components,
        warnings=warnings,
    )
