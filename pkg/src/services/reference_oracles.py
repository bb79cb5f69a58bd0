"""
Slow, independent ground-truth solvers for tests and the relaxation-gap study.
"""
from functools import lru_cache
from itertools import combinations
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.core.config import Config
from src.core.errors import ArgumentError, OracleFailure, UndefinedMetricError
from src.core.logger import logger
from src.models.configs import OracleConfig
from src.models.schemas import TreeTopology
from src.services.tree_topology import lowest_common_ancestor
from src.utils.helpers import as_matrix, as_vector


# --- projected gradient + Dykstra ------------------------------------------------

def _tree_edge_blocks(topology: TreeTopology) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Edges (child, parent) split into blocks that share no node"""
    blocks = []
    for side in (0, 1):
        for parity in (0, 1):
            children = np.array(
                [t for t in range(2, topology.num_nodes + 1)
                 if t % 2 == side and topology.node_depths[t] % 2 == parity],
                dtype=np.int64,
            )
            if children.size:
                blocks.append((children - 1, children // 2 - 1))
    return blocks


def _project_cone(z: np.ndarray, b: np.ndarray, c: float) -> Tuple[np.ndarray, np.ndarray]:
    """Per column t, Euclidean projection of (z_.t, b_t) onto {z_it <= c * b_t for all i}"""
    n = z.shape[0]
    ordered = -np.sort(-z, axis=0)
    sums = np.zeros((n + 1, z.shape[1]))
    sums[1:] = np.cumsum(ordered, axis=0)
    k = np.arange(n + 1)[:, None]
    b_k = (b[None, :] + c * sums) / (1.0 + c * c * k)
    following = np.full((n + 1, z.shape[1]), -np.inf)
    following[:n] = ordered
    k_star = np.argmax(c * b_k >= following, axis=0)
    b_new = b_k[k_star, np.arange(z.shape[1])]
    z_new = np.minimum(z, c * b_new[None, :])
    return z_new, b_new


def _project_edges(b: np.ndarray, child: np.ndarray, parent: np.ndarray) -> np.ndarray:
    out = b.copy()
    violated = b[child] > b[parent]
    mean = 0.5 * (b[child] + b[parent])
    out[child] = np.where(violated, mean, b[child])
    out[parent] = np.where(violated, mean, b[parent])
    return out


def _dykstra(z0, b0, c, upper, edge_blocks, iters, tolerance):
    """Dykstra's alternating projections onto box, cone and tree-order blocks"""
    z, b = z0.copy(), b0.copy()
    num_blocks = 2 + len(edge_blocks)
    inc_z = [np.zeros_like(z) for _ in range(num_blocks)]
    inc_b = [np.zeros_like(b) for _ in range(num_blocks)]
    for _ in range(iters):
        z_prev, b_prev = z, b
        for j in range(num_blocks):
            yz, yb = z + inc_z[j], b + inc_b[j]
            if j == 0:
                nz, nb = np.maximum(yz, 0.0), np.clip(yb, 0.0, upper)
            elif j == 1:
                nz, nb = _project_cone(yz, yb, c)
            else:
                child, parent = edge_blocks[j - 2]
                nz, nb = yz, _project_edges(yb, child, parent)
            inc_z[j], inc_b[j] = yz - nz, yb - nb
            z, b = nz, nb
        change = max(np.max(np.abs(z - z_prev)), np.max(np.abs(b - b_prev)))
        if change <= tolerance:
            break
    return z, b


def _repair_feasibility(z: np.ndarray, a: np.ndarray, topology: TreeTopology) -> Tuple[np.ndarray, np.ndarray]:
    a = np.clip(a, 0.0, 1.0)
    for t in range(2, topology.num_nodes + 1):
        a[t - 1] = min(a[t - 1], a[t // 2 - 1])
    return np.clip(z, 0.0, a[None, :]), a


def qp_oracle(
    q: np.ndarray,
    lam: float,
    topology: TreeTopology,
    config: Optional[OracleConfig] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solve the relaxed program by projected gradient descent

    Runs in the scaled coordinates b = sqrt(lam) * a, where the objective becomes
    1/2 ||b||^2 + 1/2 ||z - q - 1/2||^2 and the feasible set
    {0 <= z_it <= b_t / sqrt(lam), b tree-ordered, 0 <= b <= sqrt(lam)}.

    Returns:
        (z, a) feasible to machine precision
    """
    config = config or OracleConfig()
    q = as_matrix(q, "q", topology.num_nodes)
    if lam <= 0:
        raise ArgumentError("lambda must be positive", code="config.lambda")
    if q.size > config.max_problem_size:
        raise ArgumentError(
            f"qp_oracle is limited to n*|T| <= {config.max_problem_size}, got {q.size}",
            code="argument.oracle_size",
        )

    root = np.sqrt(lam)
    c = 1.0 / root
    shifted = q + 0.5
    edge_blocks = _tree_edge_blocks(topology)
    step = config.pg_step

    z = np.zeros_like(shifted)
    b = np.zeros(topology.num_nodes)
    history = [0.5 * float(np.sum(shifted * shifted))]
    converged = False
    for it in range(1, config.pg_iters + 1):
        z_step = z - step * (z - shifted)
        b_step = b - step * b
        z_new, b_new = _dykstra(z_step, b_step, c, root, edge_blocks, config.dykstra_iters, config.dykstra_tolerance)
        movement = max(np.max(np.abs(z_new - z)), np.max(np.abs(b_new - b)))
        z, b = z_new, b_new
        residual = z - shifted
        history.append(0.5 * float(np.dot(b, b)) + 0.5 * float(np.sum(residual * residual)))
        # A fixed point decreases the objective by nothing over any later window.
        if movement == 0.0:
            converged = True
            break
        window = config.convergence_window
        if it >= window and history[-1 - window] - history[-1] < config.convergence_tolerance:
            converged = True
            break

    if not converged:
        raise OracleFailure(
            f"projected gradient did not converge within {config.pg_iters} iterations",
            iterations=config.pg_iters,
        )
    logger.debug(f"qp_oracle converged after {it} iterations")
    return _repair_feasibility(z, b / root, topology)


# --- exhaustive pruning MIP ------------------------------------------------------

@lru_cache(maxsize=8)
def _rooted_subtrees(num_nodes: int) -> Tuple[Tuple[int, ...], ...]:
    """Every set of active nodes closed under taking parents (empty set included)"""

    def below(t: int) -> List[Tuple[int, ...]]:
        if t > num_nodes:
            return [()]
        options = [()]
        for left in below(2 * t):
            for right in below(2 * t + 1):
                options.append((t,) + left + right)
        return options

    return tuple(tuple(sorted(s)) for s in below(1))


def mip_oracle(q: np.ndarray, lam: float, topology: TreeTopology) -> Tuple[np.ndarray, np.ndarray]:
    """
    Maximize sum_i z_i . q_i - lam/2 ||a||^2 over binary hierarchical a

    For fixed a the best z is z_it = a_t 1[q_it > 0]. Ties go to fewer active nodes,
    then to the lexicographically smallest a.
    """
    q = as_matrix(q, "q", topology.num_nodes)
    if topology.num_nodes > Config.MIP_MAX_NODES:
        raise ArgumentError(
            f"mip_oracle enumerates trees with at most {Config.MIP_MAX_NODES} nodes",
            code="argument.oracle_size",
        )
    gains = np.maximum(q, 0.0).sum(axis=0)
    best_key, best_a = None, None
    for active in _rooted_subtrees(topology.num_nodes):
        a = np.zeros(topology.num_nodes)
        a[np.asarray(active, dtype=np.int64) - 1] = 1.0
        value = float(gains @ a) - 0.5 * lam * len(active)
        key = (-value, len(active), tuple(a))
        if best_key is None or key < best_key:
            best_key, best_a = key, a
    z = best_a[None, :] * (q > 0)
    return z.astype(float), best_a


def mip_objective(z: np.ndarray, a: np.ndarray, q: np.ndarray, lam: float) -> float:
    return float(np.sum(z * q) - 0.5 * lam * np.dot(a, a))


# --- one-dimensional grid search -------------------------------------------------

@lru_cache(maxsize=4)
def _grid(step: float) -> np.ndarray:
    count = int(np.floor(1.0 / step))
    grid = np.arange(count + 1) * step
    if grid[-1] < 1.0:
        grid = np.append(grid, 1.0)
    grid.setflags(write=False)
    return grid


def _group_objective(a, lam, group_size, ascending, suffix1, suffix2):
    below = np.searchsorted(ascending, a, side="left")
    count = ascending.shape[0] - below
    s1 = suffix1[below]
    s2 = suffix2[below]
    return 0.5 * lam * group_size * a * a + 0.5 * (count * a * a - 2.0 * a * s1 + s2)


def scalar_grid_oracle(lam: float, group_size: int, values, grid_step: Optional[float] = None) -> float:
    """
    Minimize (lam |G| / 2) a^2 + sum_{v >= a} (a - v)^2 / 2 on [0, 1] by grid scan,
    then refine inside the winning cell by ternary search
    """
    grid_step = grid_step or OracleConfig().grid_step
    ascending = np.sort(as_vector(values, "values"))
    # suffix sums over values >= a, indexed by the first position not below a
    suffix1 = np.append(np.cumsum(ascending[::-1])[::-1], 0.0)
    suffix2 = np.append(np.cumsum((ascending * ascending)[::-1])[::-1], 0.0)

    grid = _grid(grid_step)
    objective = _group_objective(grid, lam, group_size, ascending, suffix1, suffix2)
    best = int(np.argmin(objective))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.shape[0] - 1)]

    def f(x: float) -> float:
        return float(_group_objective(np.array([x]), lam, group_size, ascending, suffix1, suffix2)[0])

    for _ in range(100):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if f(m1) <= f(m2):
            hi = m2
        else:
            lo = m1
    return float(0.5 * (lo + hi))


# --- finite differences ----------------------------------------------------------

def finite_diff(fn: Callable[[np.ndarray], float], at: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function, one coordinate at a time"""
    if h <= 0:
        raise ArgumentError("h must be positive", code="argument.h")
    at = np.asarray(at, dtype=float)
    grad = np.zeros_like(at)
    probe = at.copy()
    for index in np.ndindex(at.shape):
        original = probe[index]
        probe[index] = original + h
        upper = fn(probe.copy())
        probe[index] = original - h
        lower = fn(probe.copy())
        probe[index] = original
        grad[index] = (upper - lower) / (2.0 * h)
    return grad


# --- pairwise dendrogram purity --------------------------------------------------

def dendrogram_purity_oracle(leaf_assignment, labels, topology: TreeTopology) -> float:
    """
    Average, over same-class point pairs, of the share of that class among the points
    under the pair's lowest common ancestor. Exact pairwise enumeration.
    """
    nodes = np.asarray(leaf_assignment, dtype=np.int64)
    labels = np.asarray(labels)
    if nodes.shape[0] != labels.shape[0]:
        raise ArgumentError("leaf_assignment and labels differ in length", code="argument.shape")
    if nodes.size and (nodes.min() < 1 or nodes.max() > topology.num_nodes):
        raise ArgumentError("assignment references a node outside the tree", code="argument.node")
    depths = topology.node_depths[nodes]

    total, pairs = 0.0, 0
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        for i, j in combinations(members, 2):
            lca = lowest_common_ancestor(int(nodes[i]), int(nodes[j]))
            lca_depth = topology.node_depths[lca]
            shift = np.maximum(depths - lca_depth, 0)
            under = (depths >= lca_depth) & ((nodes >> shift) == lca)
            total += np.sum(under & (labels == label)) / np.sum(under)
            pairs += 1
    if pairs == 0:
        raise UndefinedMetricError("dendrogram purity needs a class with at least two points")
    return float(total / pairs)
