"""
Mini-batch training with the tree program solver as a differentiable layer, plus
early stopping, learning-rate decay and frozen-a inference.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from src.core.config import Config
from src.core.errors import ArgumentError, NumericError, TrainingError
from src.core.logger import logger
from src.models.configs import SolverConfig, TrainConfig
from src.models.reports import EpochMetrics
from src.models.schemas import Dataset, EpochRecord, ModelParams, TrainedModel, TreeTopology
from src.services import model_core, reward_engine, tree_solver
from src.services.optimizers import OptimizerState, optimizer_step
from src.services.performance_monitor import RunMonitor
from src.services.tree_topology import build_complete_tree
from src.utils.helpers import as_matrix, chunk_ranges, spawn_generators


@dataclass
class EvalResult:
    loss: float
    outputs: np.ndarray
    active_node_fraction: float
    mean_a: float


@dataclass
class InferenceResult:
    outputs: np.ndarray
    z: np.ndarray
    leaves: np.ndarray


def _targets(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y.reshape(-1, 1) if y.ndim == 1 else y


def evaluate(
    params: ModelParams,
    X: np.ndarray,
    y: np.ndarray,
    topology: TreeTopology,
    config: TrainConfig,
    chunk_rows: Optional[int] = None,
) -> EvalResult:
    """
    Eval-mode loss with a solved on the whole set, or on consecutive chunks of at
    most ``chunk_rows`` rows whose results are averaged by row count
    """
    X = as_matrix(X, "X")
    targets = _targets(y)
    chunk_rows = chunk_rows or Config.VAL_CHUNK_ROWS
    solver_config = config.solver
    n = X.shape[0]
    loss_total, active_total, mean_a_total = 0.0, 0.0, 0.0
    outputs = []
    for start, stop in chunk_ranges(n, chunk_rows):
        state = model_core.forward(params, X[start:stop], topology, solver_config)
        loss, _ = model_core.loss_and_grad(config.loss, state.outputs, targets[start:stop])
        rows = stop - start
        loss_total += loss * rows
        active_total += tree_solver.active_node_fraction(state.solution.a) * rows
        mean_a_total += float(np.mean(state.solution.a)) * rows
        outputs.append(state.outputs)
    return EvalResult(
        loss=loss_total / n,
        outputs=np.vstack(outputs),
        active_node_fraction=active_total / n,
        mean_a=mean_a_total / n,
    )


def _init_params(X: np.ndarray, output_dim: int, topology: TreeTopology, config: TrainConfig,
                 rng: np.random.Generator) -> ModelParams:
    split = model_core.init_split_params(topology, X.shape[1], rng, config.split_activation)
    split = model_core.init_bias(split, X, topology)
    predictor = model_core.init_predictor_params(config.predictor, X.shape[1], topology.num_nodes, output_dim, rng)
    return ModelParams(split=split, predictor=predictor)


def _train_batch(params, state, X, targets, topology, config, dropout_rng, epoch, batch):
    try:
        forward = model_core.forward(params, X, topology, config.solver, train_mode=True, rng=dropout_rng)
    except NumericError as e:
        raise TrainingError(f"non-finite values at epoch {epoch}, batch {batch}: {e.message}",
                            epoch=epoch, batch=batch) from e
    loss, grad_outputs = model_core.loss_and_grad(config.loss, forward.outputs, targets)
    if not np.isfinite(loss):
        raise TrainingError(f"loss diverged at epoch {epoch}, batch {batch}", epoch=epoch, batch=batch)
    grads = model_core.backward(params, forward, grad_outputs, topology, config.solver)
    optimizer_step(state, params.flat(), grads)
    return loss, float(np.mean(forward.solution.a))


def train(
    train_set: Dataset,
    val_set: Dataset,
    config: TrainConfig,
    metrics_path: Optional[Union[str, Path]] = None,
) -> TrainedModel:
    """
    Train split functions and predictor end to end

    Args:
        train_set: Preprocessed training split
        val_set: Preprocessed validation split
        config: Run configuration
        metrics_path: Optional file receiving one JSON object per epoch

    Returns:
        TrainedModel holding the best-validation parameters and the frozen a
    """
    if train_set.num_points == 0 or val_set.num_points == 0:
        raise ArgumentError("train and val splits must be non-empty", code="argument.empty")
    X_train = as_matrix(train_set.X, "X_train")
    y_train = _targets(train_set.y)
    topology = build_complete_tree(config.depth)
    rngs = spawn_generators(config.seed, ["init", "shuffle", "dropout"])

    params = _init_params(X_train, y_train.shape[1], topology, config, rngs["init"])
    state = OptimizerState.from_config(config)
    monitor = RunMonitor()

    sink = None
    if metrics_path is not None:
        Path(metrics_path).parent.mkdir(parents=True, exist_ok=True)
        sink = open(metrics_path, "w", encoding="utf-8")

    history: List[EpochRecord] = []
    best_params, best_val, best_epoch = params.copy(), np.inf, 0
    since_best, since_decay = 0, 0
    n = X_train.shape[0]
    try:
        for epoch in range(1, config.max_epochs + 1):
            perm = rngs["shuffle"].permutation(n)
            loss_total, mean_a_total = 0.0, 0.0
            for batch, (start, stop) in enumerate(chunk_ranges(n, config.batch_size)):
                index = perm[start:stop]
                loss, mean_a = _train_batch(params, state, X_train[index], y_train[index], topology,
                                            config, rngs["dropout"], epoch, batch)
                loss_total += loss * (stop - start)
                mean_a_total += mean_a * (stop - start)

            val = evaluate(params, val_set.X, val_set.y, topology, config)
            if not np.isfinite(val.loss):
                raise TrainingError(f"validation loss diverged at epoch {epoch}", epoch=epoch, batch=None)

            record = EpochRecord(
                epoch=epoch,
                train_loss=loss_total / n,
                val_loss=val.loss,
                lr=state.lr,
                active_node_fraction=val.active_node_fraction,
                mean_a=mean_a_total / n,
                wall_ms=monitor.lap_ms(),
            )
            history.append(record)
            logger.info(
                f"epoch {epoch}: train_loss={record.train_loss:.6f} val_loss={record.val_loss:.6f} "
                f"lr={record.lr:.2e} active={record.active_node_fraction:.3f}"
            )
            if sink is not None:
                sink.write(EpochMetrics(**record.__dict__).model_dump_json() + "\n")
                sink.flush()

            if val.loss < best_val:
                best_params, best_val, best_epoch = params.copy(), val.loss, epoch
                since_best, since_decay = 0, 0
            else:
                since_best += 1
                since_decay += 1
                if since_best >= config.patience:
                    logger.info(f"early stopping at epoch {epoch}, best epoch {best_epoch}")
                    break
                if since_decay >= config.lr_plateau_epochs:
                    state.lr /= config.lr_decay_factor
                    since_decay = 0
    finally:
        if sink is not None:
            sink.close()

    final = tree_solver.solve(
        reward_engine.compute_rewards(model_core.split_forward(best_params.split, X_train), topology).q,
        config.solver,
        topology,
    )
    a_frozen = np.array(final.a)
    return TrainedModel(
        depth=config.depth,
        params=best_params,
        a_frozen=a_frozen,
        stats=train_set.stats,
        history=history,
        best_epoch=best_epoch,
        best_val_loss=float(best_val),
        config=config.model_dump(by_alias=True),
        metadata={
            "dropout": "hidden layers of the predictor, train mode only",
            "wall_ms": monitor.elapsed_ms(),
            "rss_mb": monitor.process_metrics().rss_mb,
        },
    )


def infer(model: TrainedModel, X: np.ndarray, resolve: bool = False) -> InferenceResult:
    """
    Per-point predictions with the frozen pruning vector

    z_it = clip(q_it + 1/2, [0, a_frozen_t]); with ``resolve`` the batch is instead
    solved as one problem, which couples the points through pooling.
    Leaves come from hard routing (s < 0 left, s >= 0 right).
    """
    topology = build_complete_tree(model.depth)
    splits = model_core.split_forward(model.params.split, X)
    rewards = reward_engine.compute_rewards(splits, topology)
    if resolve:
        lam = model.config.get("lambda", SolverConfig().lam)
        z = np.array(tree_solver.solve(rewards.q, SolverConfig(lam=lam), topology).z)
    else:
        z = tree_solver.project_traversals(rewards.q, model.a_frozen)
    outputs = model_core.predictor_forward(model.params.predictor, X, z)
    return InferenceResult(outputs=outputs, z=z, leaves=reward_engine.hard_leaves(splits, topology))
