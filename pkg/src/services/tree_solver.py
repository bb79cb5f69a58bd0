"""
Exact solver for the relaxed traversal-and-pruning program

    min_{z, a}  lam/2 ||a||^2 + 1/2 sum_i ||z_i - q_i - 1/2||^2
    s.t.        a_t <= a_p(t),  0 <= z_it <= a_t,  a_t in [0, 1]

Eliminating z leaves a tree-ordered isotonic problem in a, solved by pooling
adjacent violators (maximum violator first). Each pooled group's value has a
closed form over the group's largest shifted rewards, which also gives the
backward pass: d a_G / d q_it' = 1 / (lam |G| + k*) on the group's support.
"""
from typing import List, Tuple

import numpy as np

from src.core.errors import ArgumentError, NumericError, SolverInternalError, UsageError
from src.core.logger import logger
from src.models.configs import SolverConfig
from src.models.schemas import TreeSolution, TreeTopology
from src.utils.helpers import as_matrix, as_vector


def _scan(values: np.ndarray, group_size: int, lam: float) -> Tuple[float, int]:
    """Unclipped a(k*) and k* for descending ``values``"""
    m = values.shape[0]
    sums = np.empty(m + 1)
    sums[0] = 0.0
    np.cumsum(values, out=sums[1:])
    a_k = sums / (lam * group_size + np.arange(m + 1))
    following = np.empty(m + 1)
    following[:m] = values
    following[m] = -np.inf
    # Ties a(k) == next value keep scanning: that constraint is active at equality.
    k_star = int(np.argmax(a_k > following))
    return float(a_k[k_star]), k_star


def scalar_subproblem(group_values, group_size: int, lam: float) -> Tuple[float, int]:
    """
    Minimize (lam |G| / 2) a^2 + sum_{v >= a} (a - v)^2 / 2 over a in [0, 1]

    Args:
        group_values: Shifted rewards q_it + 1/2 of every (i, t in G), sorted descending
        group_size: |G|
        lam: Pruning strength

    Returns:
        (a_G, k*) where k* is the number of active constraints
    """
    values = as_vector(group_values, "group_values")
    if group_size < 1:
        raise ArgumentError("group_size must be >= 1", code="argument.group_size")
    if lam <= 0:
        raise ArgumentError("lambda must be positive", code="config.lambda")
    if values.shape[0] > 1 and np.any(np.diff(values) > 1e-12):
        raise SolverInternalError("group values are not sorted in descending order", code="solver.unsorted")
    raw, k_star = _scan(values, group_size, lam)
    return float(min(max(raw, 0.0), 1.0)), k_star


class _Pool:
    """A group of pooled nodes with its shifted rewards kept in descending order"""

    __slots__ = ("nodes", "values", "points", "node_ids", "value", "k_star", "clipped")

    def __init__(self, nodes: List[int], values: np.ndarray, points: np.ndarray, node_ids: np.ndarray):
        self.nodes = nodes
        self.values = values
        self.points = points
        self.node_ids = node_ids
        self.value = 0.0
        self.k_star = 0
        self.clipped = False

    def resolve(self, lam: float) -> float:
        raw, self.k_star = _scan(self.values, len(self.nodes), lam)
        self.value = min(max(raw, 0.0), 1.0)
        self.clipped = self.value != raw
        return self.value

    def absorb(self, other: "_Pool") -> None:
        """Two-way merge of the descending runs; on ties this pool's entries come first"""
        insert_at = np.searchsorted(-self.values, -other.values, side="right")
        from_other = np.zeros(self.values.shape[0] + other.values.shape[0], dtype=bool)
        from_other[insert_at + np.arange(other.values.shape[0])] = True
        from_self = ~from_other
        for name in ("values", "points", "node_ids"):
            mine, theirs = getattr(self, name), getattr(other, name)
            merged = np.empty(from_other.shape[0], dtype=mine.dtype)
            merged[from_self] = mine
            merged[from_other] = theirs
            setattr(self, name, merged)
        self.nodes = self.nodes + other.nodes


def project_traversals(q: np.ndarray, a: np.ndarray) -> np.ndarray:
    """z_it = clip(q_it + 1/2, [0, a_t])"""
    q = as_matrix(q, "q")
    a = as_vector(a, "a", q.shape[1])
    return np.minimum(np.maximum(q + 0.5, 0.0), a[None, :])


def relaxed_objective(z: np.ndarray, a: np.ndarray, q: np.ndarray, lam: float) -> float:
    """Value of the relaxed program (minimization form) at (z, a)"""
    residual = z - q - 0.5
    return float(0.5 * lam * np.dot(a, a) + 0.5 * np.sum(residual * residual))


def solve(q: np.ndarray, config: SolverConfig, topology: TreeTopology) -> TreeSolution:
    """
    Solve the relaxed program exactly

    Args:
        q: n x |T| reward matrix (root column included)
        config: Solver configuration (lambda, tolerances)
        topology: Tree the columns of q refer to

    Returns:
        TreeSolution holding z, a and the pooled groups with their supports
    """
    q = as_matrix(q, "q", topology.num_nodes)
    if not np.all(np.isfinite(q)):
        raise NumericError("non-finite reward value", code="numeric.rewards")
    lam = config.lam
    tol = config.violation_tolerance
    n, T = q.shape

    shifted = q + 0.5
    order = np.argsort(-shifted, axis=0, kind="stable")
    sorted_cols = np.take_along_axis(shifted, order, axis=0)

    a = np.zeros(T + 1)
    node_group = np.arange(T + 1)
    pools = {}
    for t in range(1, T + 1):
        pool = _Pool([t], sorted_cols[:, t - 1], order[:, t - 1], np.full(n, t, dtype=np.int64))
        a[t] = pool.resolve(lam)
        pools[t] = pool

    children = np.arange(2, T + 1)
    parents = children // 2
    merges = 0
    while True:
        child_a = a[children]
        violating = (child_a > a[parents] + tol) & (node_group[children] != node_group[parents])
        if not violating.any():
            break
        # Maximum violator; argmax returns the smallest id among ties.
        t_max = int(children[np.argmax(np.where(violating, child_a, -np.inf))])
        absorbed = pools.pop(int(node_group[t_max]))
        target_key = int(node_group[t_max // 2])
        target = pools[target_key]
        target.absorb(absorbed)
        value = target.resolve(lam)
        members = np.asarray(target.nodes)
        node_group[members] = target_key
        a[members] = value
        merges += 1
        if merges > T - 1:
            raise SolverInternalError("pooling exceeded |T| - 1 merges", code="solver.merges", merges=merges)

    logger.debug(f"solve: n={n} |T|={T} lambda={lam} merges={merges} groups={len(pools)}")
    return _freeze_solution(q, shifted, a[1:].copy(), pools, node_group, lam, merges)


def _freeze_solution(q, shifted, a, pools, node_group, lam, merges) -> TreeSolution:
    keys = sorted(pools)
    index_of = {key: idx for idx, key in enumerate(keys)}
    groups, supports, values, clipped = [], [], [], []
    for key in keys:
        pool = pools[key]
        groups.append(tuple(sorted(pool.nodes)))
        k = pool.k_star
        supports.append(np.column_stack((pool.points[:k], pool.node_ids[:k])).astype(np.int64))
        values.append(float(pool.value))
        clipped.append(bool(pool.clipped))
    group_index = np.zeros_like(node_group)
    for t in range(1, node_group.shape[0]):
        group_index[t] = index_of[int(node_group[t])]

    z = project_traversals(q, a)
    for array in (z, a, shifted, group_index, *supports):
        array.setflags(write=False)
    return TreeSolution(
        z=z,
        a=a,
        shifted=shifted,
        groups=groups,
        supports=supports,
        group_values=values,
        clipped=clipped,
        node_group=group_index,
        lam=lam,
        num_merges=merges,
    )


def jacobian_masks(solution: TreeSolution, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Which branch of the clip each z_it sits on

    Returns:
        (direct, through_a): z_it follows q_it (0 < q + 1/2 < a) or follows a_t
        (q + 1/2 >= a_t > 0); entries in neither are pinned at 0
    """
    shifted = solution.shifted
    a_row = solution.a[None, :]
    direct = (shifted > tol) & (shifted < a_row - tol)
    through_a = (shifted >= a_row - tol) & (a_row > tol) & ~direct
    return direct, through_a


def backward(
    solution: TreeSolution,
    grad_z: np.ndarray,
    grad_a: np.ndarray,
    config: SolverConfig,
    topology: TreeTopology,
) -> np.ndarray:
    """
    Pull gradients on (z, a) back to the rewards q

    z depends on q directly where 0 < q + 1/2 < a, and on a where q + 1/2 >= a > 0;
    a depends on q through each interior group's support. Boundary coordinates get
    zero gradient.

    Returns:
        n x |T| gradient with respect to q
    """
    if (
        solution.node_group is None
        or len(solution.supports) != len(solution.groups)
        or len(solution.group_values) != len(solution.groups)
        or solution.node_group.shape[0] != topology.num_nodes + 1
    ):
        raise UsageError("solution does not carry group bookkeeping for this tree", code="usage.stale_solution")
    if solution.lam != config.lam:
        raise UsageError(
            f"solution was computed with lambda={solution.lam}, config has {config.lam}",
            code="usage.stale_solution",
        )
    n, T = solution.z.shape
    grad_z = np.zeros((n, T)) if grad_z is None else as_matrix(grad_z, "grad_z", T)
    grad_a = np.zeros(T) if grad_a is None else as_vector(grad_a, "grad_a", T)
    if grad_z.shape[0] != n:
        raise ArgumentError(f"grad_z must have {n} rows", code="argument.shape")

    tol = config.interior_tolerance
    direct, through_a = jacobian_masks(solution, tol)

    grad_q = np.where(direct, grad_z, 0.0)
    pooled = grad_a + np.where(through_a, grad_z, 0.0).sum(axis=0)

    lam = solution.lam
    for nodes, support, value, clipped in zip(
        solution.groups, solution.supports, solution.group_values, solution.clipped
    ):
        if clipped or not (tol < value < 1.0 - tol) or support.shape[0] == 0:
            continue
        coeff = pooled[np.asarray(nodes) - 1].sum() / (lam * len(nodes) + support.shape[0])
        grad_q[support[:, 0], support[:, 1] - 1] += coeff
    return grad_q


def active_node_fraction(a: np.ndarray) -> float:
    return float(np.mean(np.asarray(a) > 0))
