"""
Self-supervised hierarchical clustering: feature/target column split, point
assignment on the pruned tree, dendrogram purity and routing distributions.
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import ArgumentError, UndefinedMetricError
from src.models.reports import NodeRouting
from src.models.schemas import TreeTopology
from src.utils.helpers import as_matrix, as_vector


def make_self_supervised(X: np.ndarray, target_columns: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Regress a subset of the columns from the rest

    Returns:
        (features, targets) with the remaining columns in their original order
    """
    X = as_matrix(X, "X")
    d = X.shape[1]
    columns = [int(c) for c in target_columns]
    if len(set(columns)) != len(columns):
        raise ArgumentError("target columns must be distinct", code="argument.target_cols", columns=columns)
    out_of_range = [c for c in columns if not 0 <= c < d]
    if out_of_range:
        raise ArgumentError(f"target columns {out_of_range} outside 0..{d - 1}",
                            code="argument.target_cols", columns=columns)
    if not 1 <= len(columns) < d:
        raise ArgumentError(f"need 1 <= k < d target columns, got k={len(columns)}, d={d}",
                            code="argument.target_cols", columns=columns)
    keep = [c for c in range(d) if c not in set(columns)]
    return X[:, keep], X[:, columns]


def collapse_to_active(leaves: np.ndarray, a: np.ndarray, topology: TreeTopology) -> np.ndarray:
    """Move each point up to its deepest ancestor-or-self with a > 0 (the root at worst)"""
    nodes = np.asarray(leaves, dtype=np.int64).copy()
    a = as_vector(a, "a", topology.num_nodes)
    for _ in range(topology.depth):
        pruned = (a[nodes - 1] <= 0) & (nodes > 1)
        if not pruned.any():
            break
        nodes = np.where(pruned, nodes // 2, nodes)
    return nodes


def _subtree_class_counts(assignment, labels, topology: TreeTopology) -> Tuple[np.ndarray, np.ndarray]:
    nodes = np.asarray(assignment, dtype=np.int64)
    labels = np.asarray(labels)
    if nodes.shape[0] != labels.shape[0]:
        raise ArgumentError("assignment and labels differ in length", code="argument.shape")
    if nodes.size and (nodes.min() < 1 or nodes.max() > topology.num_nodes):
        raise ArgumentError("assignment references a node outside the tree", code="argument.node")
    classes, codes = np.unique(labels, return_inverse=True)
    counts = np.zeros((topology.num_nodes + 1, classes.shape[0]))
    np.add.at(counts, (nodes, codes.reshape(-1)), 1.0)
    # Deepest level first so each parent sees its children's finished totals.
    for level in range(topology.depth, 0, -1):
        ids = np.arange(2 ** level, 2 ** (level + 1))
        np.add.at(counts, ids // 2, counts[ids])
    return counts, classes


def dendrogram_purity(leaf_assignment, labels, topology: TreeTopology) -> float:
    """
    Expected purity of the lowest common ancestor over same-class point pairs

    Points may sit at internal nodes (pruned subtrees). Pairs whose LCA is node v
    number C(N_c(v), 2) minus the same count in both children, so one bottom-up
    pass over per-node class counts gives the exact average.
    """
    counts, _ = _subtree_class_counts(leaf_assignment, labels, topology)
    pairs = counts * (counts - 1) / 2.0
    exact = pairs.copy()
    branching = np.arange(1, 2 ** topology.depth)
    exact[branching] -= pairs[2 * branching] + pairs[2 * branching + 1]
    totals = counts.sum(axis=1, keepdims=True)
    purity = np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)
    num_pairs = exact[1:].sum()
    if num_pairs <= 0:
        raise UndefinedMetricError("dendrogram purity needs a class with at least two points")
    return float((exact[1:] * purity[1:]).sum() / num_pairs)


def routing_distribution(
    assignment,
    topology: TreeTopology,
    labels: Optional[Sequence] = None,
    max_depth: Optional[int] = None,
    a: Optional[np.ndarray] = None,
    active_only: bool = False,
) -> List[NodeRouting]:
    """
    Share of points traversing each node, normalized per depth level, and the same
    per class when labels are given. Empty nodes carry no class distribution.

    With the pruning vector ``a`` every row carries its node's a_t, and
    ``active_only`` drops the nodes with a_t = 0.
    """
    if active_only and a is None:
        raise ArgumentError("active_only needs the pruning vector a", code="argument.a")
    if a is not None:
        a = as_vector(a, "a", topology.num_nodes)
    nodes = np.asarray(assignment, dtype=np.int64)
    labels = np.zeros(nodes.shape[0], dtype=np.int64) if labels is None else np.asarray(labels)
    counts, classes = _subtree_class_counts(nodes, labels, topology)
    deepest = topology.depth if max_depth is None else min(max_depth, topology.depth)
    report = []
    for level in range(deepest + 1):
        ids = np.arange(2 ** level, 2 ** (level + 1))
        level_counts = counts[ids]
        level_total = level_counts.sum()
        class_totals = level_counts.sum(axis=0)
        for t, row in zip(ids, level_counts):
            if active_only and a[t - 1] <= 0:
                continue
            reached = row.sum()
            distribution = None
            if reached > 0:
                distribution = {
                    str(c): float(row[k] / class_totals[k]) if class_totals[k] > 0 else 0.0
                    for k, c in enumerate(classes)
                }
            report.append(NodeRouting(
                node=int(t),
                depth=level,
                a=None if a is None else float(a[t - 1]),
                share=float(reached / level_total) if level_total > 0 else 0.0,
                class_distribution=distribution,
            ))
    return report
