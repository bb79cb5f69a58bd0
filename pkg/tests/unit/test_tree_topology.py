import pytest

from src.core.config import Config
from src.core.errors import ArgumentError, ConfigError
from src.services.tree_topology import (
    ancestor_sets,
    build_complete_tree,
    lowest_common_ancestor,
    path_from_root,
    subtree_nodes,
)


def test_lone_root():
    """Depth 0 is a single node that is both root and leaf"""
    topology = build_complete_tree(0)
    assert topology.num_nodes == 1
    assert topology.num_branching == 0
    assert list(topology.leaves) == [1]


def test_depth_two_parents():
    topology = build_complete_tree(2)
    assert topology.num_nodes == 7
    assert topology.parent(5) == 2
    assert topology.parent(6) == 3
    assert topology.parent(1) is None
    assert topology.children(3) == (6, 7)


def test_depth_three_counts():
    topology = build_complete_tree(3)
    assert topology.num_nodes == 15
    assert topology.num_branching == 7
    assert len(topology.leaves) == 8
    assert topology.is_leaf(8) and not topology.is_leaf(7)


@pytest.mark.parametrize("depth", [-1, Config.MAX_DEPTH + 1])
def test_depth_guard(depth):
    with pytest.raises(ConfigError) as exc:
        build_complete_tree(depth)
    assert exc.value.code == "config.depth"


def test_topology_arrays_are_read_only():
    topology = build_complete_tree(2)
    with pytest.raises(ValueError):
        topology.node_depths[1] = 5


@pytest.mark.parametrize(
    "t, left, right",
    [(1, set(), set()), (5, {1}, {2}), (7, set(), {1, 3})],
)
def test_ancestor_sets_examples(t, left, right):
    a_left, a_right = ancestor_sets(build_complete_tree(2), t)
    assert a_left == left
    assert a_right == right


def test_ancestor_sets_rejects_bad_node():
    with pytest.raises(ArgumentError):
        ancestor_sets(build_complete_tree(2), 8)
    with pytest.raises(ArgumentError):
        ancestor_sets(build_complete_tree(2), 0)


@pytest.mark.parametrize("depth", range(1, 7))
def test_ancestor_recursion_matches_path_walk(depth):
    """A_L(2t) = A_L(t) + {t}, A_R(2t+1) = A_R(t) + {t}, sizes equal node depth"""
    topology = build_complete_tree(depth)
    for t in topology.branching_nodes:
        a_left, a_right = ancestor_sets(topology, t)
        left_child = ancestor_sets(topology, 2 * t)
        right_child = ancestor_sets(topology, 2 * t + 1)
        assert left_child == (a_left | {t}, a_right)
        assert right_child == (a_left, a_right | {t})
    for t in range(2, topology.num_nodes + 1):
        a_left, a_right = ancestor_sets(topology, t)
        assert len(a_left) + len(a_right) == topology.node_depths[t]
        assert a_left | a_right == set(path_from_root(topology, t)[:-1])


def test_subtree_and_lca():
    topology = build_complete_tree(2)
    assert subtree_nodes(topology, 2) == [2, 4, 5]
    assert subtree_nodes(topology, 7) == [7]
    assert lowest_common_ancestor(4, 5) == 2
    assert lowest_common_ancestor(4, 7) == 1
    assert lowest_common_ancestor(2, 5) == 2
