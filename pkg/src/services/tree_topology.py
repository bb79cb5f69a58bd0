"""
Index arithmetic and ancestor structure for complete binary trees.
"""
from functools import lru_cache
from typing import FrozenSet, List, Tuple

import numpy as np

from src.core.config import Config
from src.core.errors import ArgumentError, ConfigError
from src.models.schemas import TreeTopology


@lru_cache(maxsize=32)
def build_complete_tree(depth: int) -> TreeTopology:
    """
    Build the breadth-first indexed complete tree of the given depth

    Args:
        depth: Number of edges from the root to any leaf (0 gives a lone root)

    Returns:
        Immutable topology; branching nodes 1..2^D-1, leaves 2^D..2^(D+1)-1
    """
    if not isinstance(depth, (int, np.integer)) or isinstance(depth, bool):
        raise ConfigError(f"depth must be an integer, got {depth!r}", code="config.depth")
    if depth < 0 or depth > Config.MAX_DEPTH:
        raise ConfigError(
            f"depth must be within [0, {Config.MAX_DEPTH}], got {depth}",
            code="config.depth",
            depth=int(depth),
        )
    depth = int(depth)
    num_nodes = 2 ** (depth + 1) - 1
    ids = np.arange(num_nodes + 1)
    parents = ids // 2
    parents[0] = 0
    node_depths = np.zeros(num_nodes + 1, dtype=np.int64)
    for level in range(depth + 1):
        node_depths[2 ** level:2 ** (level + 1)] = level
    parents.setflags(write=False)
    node_depths.setflags(write=False)
    return TreeTopology(depth=depth, num_nodes=num_nodes, parents=parents, node_depths=node_depths)


def validate_node(topology: TreeTopology, t: int) -> int:
    if not 1 <= int(t) <= topology.num_nodes:
        raise ArgumentError(
            f"node id {t} outside 1..{topology.num_nodes}",
            code="argument.node",
            node=int(t),
        )
    return int(t)


def ancestor_sets(topology: TreeTopology, t: int) -> Tuple[FrozenSet[int], FrozenSet[int]]:
    """
    Split the strict ancestors of t by the branch taken towards t

    Returns:
        (A_L, A_R): ancestors whose left child (resp. right child) lies on the path to t
    """
    t = validate_node(topology, t)
    left: List[int] = []
    right: List[int] = []
    node = t
    while node > 1:
        parent = node // 2
        (left if node % 2 == 0 else right).append(parent)
        node = parent
    return frozenset(left), frozenset(right)


def path_from_root(topology: TreeTopology, t: int) -> List[int]:
    """Node ids from the root down to t, inclusive"""
    t = validate_node(topology, t)
    path = [t]
    while path[-1] > 1:
        path.append(path[-1] // 2)
    return path[::-1]


def subtree_nodes(topology: TreeTopology, t: int) -> List[int]:
    """All node ids in the subtree rooted at t, breadth-first"""
    t = validate_node(topology, t)
    nodes: List[int] = []
    level = [t]
    while level:
        level = [u for u in level if u <= topology.num_nodes]
        nodes.extend(level)
        level = [c for u in level for c in (2 * u, 2 * u + 1)]
    return nodes


def lowest_common_ancestor(u: int, v: int) -> int:
    while u != v:
        if u > v:
            u //= 2
        else:
            v //= 2
    return u
