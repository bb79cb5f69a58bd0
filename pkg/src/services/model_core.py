"""
Split functions s_theta, predictor f_phi, losses, and the end-to-end forward and
backward chain  X -> s -> q -> (z, a) -> f_phi([x ; z]) -> loss.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.core.errors import ArgumentError, UsageError
from src.models.configs import PredictorSpec, SolverConfig
from src.models.schemas import (
    ModelParams,
    PredictorParams,
    RewardMatrix,
    SplitParams,
    TreeSolution,
    TreeTopology,
)
from src.services import reward_engine, tree_solver
from src.utils.helpers import as_matrix


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


# --- split functions -------------------------------------------------------------

def init_split_params(
    topology: TreeTopology,
    num_features: int,
    rng: np.random.Generator,
    activation: str = "identity",
) -> SplitParams:
    """Weights uniform in [-1/sqrt(d), 1/sqrt(d)] per branching node, zero biases"""
    bound = 1.0 / np.sqrt(num_features)
    weights = rng.uniform(-bound, bound, size=(topology.num_branching, num_features))
    return SplitParams(weights=weights, bias=np.zeros(topology.num_branching), activation=activation)


def _split_preactivation(params: SplitParams, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    X = as_matrix(X, "X")
    if X.shape[1] != params.weights.shape[1]:
        raise ArgumentError(
            f"X has {X.shape[1]} features, split weights expect {params.weights.shape[1]}",
            code="argument.features",
        )
    linear = X @ params.weights.T
    if params.activation == "elu":
        return linear, elu(linear)
    return linear, linear


def split_forward(params: SplitParams, X: np.ndarray) -> np.ndarray:
    """s_it = act(w_t . x_i) + b_t for every branching node t"""
    _, activated = _split_preactivation(params, X)
    return activated + params.bias[None, :]


def split_backward(params: SplitParams, X: np.ndarray, grad_splits: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    linear, _ = _split_preactivation(params, X)
    grad_linear = grad_splits * elu_grad(linear) if params.activation == "elu" else grad_splits
    return grad_linear.T @ np.asarray(X, dtype=float), grad_splits.sum(axis=0)


def init_bias(params: SplitParams, X: np.ndarray, topology: TreeTopology) -> SplitParams:
    """
    Centre every split on the training points that reach it

    Level by level from the root, b_t is minus the mean pre-bias split value over
    points with q_it > 0 under the biases already set; unreached nodes keep b_t = 0.
    """
    X = as_matrix(X, "X")
    if X.shape[0] == 0:
        raise ArgumentError("init_bias needs a non-empty training set", code="argument.empty")
    _, pre_bias = _split_preactivation(params, X)
    bias = np.zeros(topology.num_branching)
    for level in range(topology.depth):
        rewards = reward_engine.compute_rewards(pre_bias + bias[None, :], topology)
        for t in range(2 ** level, 2 ** (level + 1)):
            reached = rewards.q[:, t - 1] > 0
            if reached.any():
                bias[t - 1] = -pre_bias[reached, t - 1].mean()
    return SplitParams(weights=params.weights, bias=bias, activation=params.activation)


# --- predictor -------------------------------------------------------------------

def init_predictor_params(
    spec: PredictorSpec,
    num_features: int,
    num_nodes: int,
    output_dim: int,
    rng: np.random.Generator,
) -> PredictorParams:
    width = num_nodes + (num_features if spec.use_features else 0)
    dims = [width] + [spec.hidden_dim] * (spec.layer_count - 1) + [output_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return PredictorParams(weights=weights, biases=biases, dropout=spec.dropout, use_features=spec.use_features)


@dataclass
class _PredictorCache:
    inputs: List[np.ndarray]        # input to each layer
    pre: List[np.ndarray]           # pre-activation of each hidden layer
    masks: List[Optional[np.ndarray]]


def _predictor_input(params: PredictorParams, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    Z = as_matrix(Z, "Z")
    if params.use_features:
        X = as_matrix(X, "X")
        if X.shape[0] != Z.shape[0]:
            raise ArgumentError("X and Z are not row-aligned", code="argument.shape")
        inp = np.hstack((X, Z))
    else:
        inp = Z
    if inp.shape[1] != params.input_dim:
        raise ArgumentError(
            f"predictor expects input width {params.input_dim}, got {inp.shape[1]}",
            code="argument.width",
        )
    return inp


def _predictor_pass(params, X, Z, train_mode, rng) -> Tuple[np.ndarray, _PredictorCache]:
    h = _predictor_input(params, X, Z)
    use_dropout = train_mode and params.dropout > 0
    if use_dropout and rng is None:
        raise UsageError("dropout in train mode needs the run's generator", code="usage.rng")
    cache = _PredictorCache(inputs=[], pre=[], masks=[])
    last = len(params.weights) - 1
    for idx, (w, b) in enumerate(zip(params.weights, params.biases)):
        cache.inputs.append(h)
        out = h @ w + b
        if idx == last:
            return out, cache
        cache.pre.append(out)
        h = elu(out)
        mask = None
        if use_dropout:
            mask = (rng.random(h.shape) >= params.dropout) / (1.0 - params.dropout)
            h = h * mask
        cache.masks.append(mask)
    raise UsageError("predictor has no layers", code="usage.predictor")


def predictor_forward(
    params: PredictorParams,
    X: np.ndarray,
    Z: np.ndarray,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Outputs of f_phi on [x ; z] (or z alone); dropout only in train mode"""
    outputs, _ = _predictor_pass(params, X, Z, train_mode, rng)
    return outputs


def predictor_backward(
    params: PredictorParams, cache: _PredictorCache, grad_out: np.ndarray
) -> Tuple[List[np.ndarray], List[np.ndarray], np.ndarray]:
    """Returns (weight grads, bias grads, grad wrt the predictor input)"""
    grad_w: List[np.ndarray] = [None] * len(params.weights)
    grad_b: List[np.ndarray] = [None] * len(params.weights)
    grad = grad_out
    for idx in range(len(params.weights) - 1, -1, -1):
        grad_w[idx] = cache.inputs[idx].T @ grad
        grad_b[idx] = grad.sum(axis=0)
        grad = grad @ params.weights[idx].T
        if idx > 0:
            mask = cache.masks[idx - 1]
            if mask is not None:
                grad = grad * mask
            grad = grad * elu_grad(cache.pre[idx - 1])
    return grad_w, grad_b, grad


# --- losses ----------------------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def loss_and_grad(kind: str, outputs: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean loss over all output entries and its gradient

    Args:
        kind: "mse" or "bce" (BCE takes logits and {0, 1} targets)
    """
    outputs = np.asarray(outputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if targets.size != outputs.size:
        raise ArgumentError(
            f"targets shape {targets.shape} does not match outputs {outputs.shape}",
            code="argument.shape",
        )
    targets = targets.reshape(outputs.shape)
    count = outputs.size
    if kind == "mse":
        diff = outputs - targets
        return float(np.mean(diff * diff)), 2.0 * diff / count
    if kind == "bce":
        if not np.all((targets == 0) | (targets == 1)):
            raise ArgumentError("BCE targets must be 0 or 1", code="argument.targets")
        loss = np.logaddexp(0.0, outputs) - outputs * targets
        return float(np.mean(loss)), (_sigmoid(outputs) - targets) / count
    raise ArgumentError(f"unknown loss kind '{kind}'", code="argument.loss")


def error_rate(outputs: np.ndarray, targets: np.ndarray) -> float:
    predicted = (np.asarray(outputs).reshape(-1) >= 0).astype(float)
    return float(np.mean(predicted != np.asarray(targets, dtype=float).reshape(-1)))


# --- end-to-end chain ------------------------------------------------------------

@dataclass
class ForwardState:
    X: np.ndarray
    splits: np.ndarray
    rewards: RewardMatrix
    solution: TreeSolution
    outputs: np.ndarray
    predictor_cache: _PredictorCache


def forward(
    params: ModelParams,
    X: np.ndarray,
    topology: TreeTopology,
    solver_config: SolverConfig,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> ForwardState:
    X = as_matrix(X, "X")
    splits = split_forward(params.split, X)
    rewards = reward_engine.compute_rewards(splits, topology)
    solution = tree_solver.solve(rewards.q, solver_config, topology)
    outputs, cache = _predictor_pass(params.predictor, X, solution.z, train_mode, rng)
    return ForwardState(X, splits, rewards, solution, outputs, cache)


def backward(
    params: ModelParams,
    state: ForwardState,
    grad_outputs: np.ndarray,
    topology: TreeTopology,
    solver_config: SolverConfig,
) -> Dict[str, np.ndarray]:
    """
    Gradients of every trainable array, keyed like ModelParams.flat()

    loss -> predictor -> z -> {q directly, a -> q} -> split values -> theta
    """
    grad_w, grad_b, grad_input = predictor_backward(params.predictor, state.predictor_cache, grad_outputs)
    grad_z = grad_input[:, -topology.num_nodes:]
    grad_q = tree_solver.backward(state.solution, grad_z, None, solver_config, topology)
    grad_splits = reward_engine.rewards_backward(state.rewards, grad_q)
    grad_weights, grad_bias = split_backward(params.split, state.X, grad_splits)

    grads = {"split.weights": grad_weights, "split.bias": grad_bias}
    for idx, (gw, gb) in enumerate(zip(grad_w, grad_b)):
        grads[f"predictor.weights.{idx}"] = gw
        grads[f"predictor.biases.{idx}"] = gb
    return grads
