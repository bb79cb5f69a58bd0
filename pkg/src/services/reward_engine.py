"""
Rewards q_it = min({s_u(x_i) : u in A_R(t)} U {-s_u(x_i) : u in A_L(t)}) and their
Danskin backward pass through the minimizing ancestor.
"""
import numpy as np

from src.core.errors import ArgumentError, NumericError
from src.models.schemas import RewardMatrix, TreeTopology
from src.utils.helpers import as_matrix


def compute_rewards(splits: np.ndarray, topology: TreeTopology) -> RewardMatrix:
    """
    Compute the reward matrix from per-node split values

    Args:
        splits: n x |T_B| split values, column c belongs to branching node c+1
        topology: Tree with depth >= 1

    Returns:
        RewardMatrix with the root column fixed at 1
    """
    splits = as_matrix(splits, "splits")
    if topology.depth < 1:
        raise ArgumentError("rewards need a tree of depth >= 1", code="argument.depth")
    if splits.shape[1] != topology.num_branching:
        raise ArgumentError(
            f"expected {topology.num_branching} split columns, got {splits.shape[1]}",
            code="argument.shape",
        )
    if not np.all(np.isfinite(splits)):
        bad = np.argwhere(~np.isfinite(splits))[0]
        raise NumericError(
            "non-finite split value",
            code="numeric.splits",
            point=int(bad[0]),
            node=int(bad[1]) + 1,
        )

    n = splits.shape[0]
    T = topology.num_nodes
    q = np.empty((n, T))
    argmin_node = np.zeros((n, T), dtype=np.int64)
    argmin_sign = np.zeros((n, T), dtype=np.int8)
    q[:, 0] = 1.0

    # Breadth-first: the parent column is final before its children are filled.
    for t in range(2, T + 1):
        u = t // 2
        sign = -1 if t % 2 == 0 else 1
        term = sign * splits[:, u - 1]
        col = t - 1
        if u == 1:
            q[:, col] = term
            argmin_node[:, col] = u
            argmin_sign[:, col] = sign
            continue
        inherited = q[:, u - 1]
        # Ties keep the inherited (smaller-id) ancestor.
        take_new = term < inherited
        q[:, col] = np.where(take_new, term, inherited)
        argmin_node[:, col] = np.where(take_new, u, argmin_node[:, u - 1])
        argmin_sign[:, col] = np.where(take_new, sign, argmin_sign[:, u - 1])

    return RewardMatrix(q=q, argmin_node=argmin_node, argmin_sign=argmin_sign)


def rewards_backward(rewards: RewardMatrix, grad_q: np.ndarray) -> np.ndarray:
    """
    Route dL/dq back to the split values through each entry's minimizer

    Returns:
        n x |T_B| gradient with respect to the split values
    """
    grad_q = as_matrix(grad_q, "grad_q")
    if grad_q.shape != rewards.q.shape:
        raise ArgumentError(
            f"grad_q shape {grad_q.shape} does not match rewards {rewards.q.shape}",
            code="argument.shape",
        )
    n, T = grad_q.shape
    num_branching = (T + 1) // 2 - 1
    grad_splits = np.zeros((n, num_branching))
    rows = np.arange(n)
    # Fixed column order keeps the per-node summation order deterministic.
    for col in range(1, T):
        ancestors = rewards.argmin_node[:, col] - 1
        grad_splits[rows, ancestors] += rewards.argmin_sign[:, col] * grad_q[:, col]
    return grad_splits


def hard_leaves(splits: np.ndarray, topology: TreeTopology) -> np.ndarray:
    """Leaf reached by each point when s < 0 goes left and s >= 0 goes right"""
    splits = as_matrix(splits, "splits")
    node = np.ones(splits.shape[0], dtype=np.int64)
    rows = np.arange(splits.shape[0])
    for _ in range(topology.depth):
        go_right = splits[rows, node - 1] >= 0
        node = 2 * node + go_right.astype(np.int64)
    return node
