import numpy as np
import pytest

from src.core.errors import ArgumentError, NumericError
from src.services.reference_oracles import finite_diff
from src.services.reward_engine import compute_rewards, hard_leaves, rewards_backward
from src.services.tree_topology import ancestor_sets, build_complete_tree


@pytest.fixture
def hand_traced(depth2):
    splits = np.array([[0.7, -0.3, 0.2]])
    return splits, compute_rewards(splits, depth2)


def test_hand_traced_rewards(hand_traced):
    _, rewards = hand_traced
    np.testing.assert_allclose(rewards.q[0], [1.0, -0.7, 0.7, -0.7, -0.7, -0.2, 0.2])
    assert list(np.flatnonzero(rewards.q[0] > 0) + 1) == [1, 3, 7]


def test_zero_split_depth_one(depth1):
    rewards = compute_rewards(np.zeros((1, 1)), depth1)
    np.testing.assert_array_equal(rewards.q[0], [1.0, 0.0, 0.0])


def test_root_column_is_one(depth2, rng):
    rewards = compute_rewards(rng.standard_normal((20, 3)), depth2)
    assert np.all(rewards.q[:, 0] == 1.0)


def test_non_finite_split_rejected(depth2):
    splits = np.zeros((2, 3))
    splits[1, 2] = np.nan
    with pytest.raises(NumericError) as exc:
        compute_rewards(splits, depth2)
    assert exc.value.details == {"point": 1, "node": 3}


def test_wrong_column_count(depth2):
    with pytest.raises(ArgumentError):
        compute_rewards(np.zeros((2, 4)), depth2)


def test_depth_zero_rejected():
    with pytest.raises(ArgumentError):
        compute_rewards(np.zeros((2, 0)), build_complete_tree(0))


def test_backward_examples(hand_traced):
    _, rewards = hand_traced
    grad_q = np.zeros((1, 7))
    grad_q[0, 6] = 1.0
    np.testing.assert_array_equal(rewards_backward(rewards, grad_q), [[0.0, 0.0, 1.0]])

    grad_q = np.zeros((1, 7))
    grad_q[0, 1] = 1.0
    np.testing.assert_array_equal(rewards_backward(rewards, grad_q), [[-1.0, 0.0, 0.0]])

    np.testing.assert_array_equal(rewards_backward(rewards, np.zeros((1, 7))), np.zeros((1, 3)))


def test_root_gradient_ignored(hand_traced):
    _, rewards = hand_traced
    grad_q = np.zeros((1, 7))
    grad_q[0, 0] = 5.0
    assert not rewards_backward(rewards, grad_q).any()


def test_backward_shape_mismatch(hand_traced):
    _, rewards = hand_traced
    with pytest.raises(ArgumentError):
        rewards_backward(rewards, np.zeros((2, 7)))


def test_argmin_is_an_ancestor(rng):
    topology = build_complete_tree(3)
    rewards = compute_rewards(rng.standard_normal((15, 7)), topology)
    for t in range(2, topology.num_nodes + 1):
        a_left, a_right = ancestor_sets(topology, t)
        for i in range(15):
            node = rewards.argmin_node[i, t - 1]
            sign = rewards.argmin_sign[i, t - 1]
            assert node in (a_right if sign > 0 else a_left)


def test_monotone_along_paths(rng):
    topology = build_complete_tree(4)
    q = compute_rewards(rng.standard_normal((50, topology.num_branching)), topology).q
    for t in range(4, topology.num_nodes + 1):
        assert np.all(q[:, t - 1] <= q[:, t // 2 - 1])


def test_one_positive_path_per_point(rng):
    """Without zero splits, {t : q_t > 0} is the root-to-leaf path of hard routing"""
    topology = build_complete_tree(3)
    splits = rng.standard_normal((40, 7))
    q = compute_rewards(splits, topology).q
    leaves = hard_leaves(splits, topology)
    for i in range(40):
        positive = set(np.flatnonzero(q[i] > 0) + 1)
        path, node = set(), int(leaves[i])
        while node >= 1:
            path.add(node)
            node //= 2
        assert positive == path


def test_backward_matches_finite_differences(rng):
    topology = build_complete_tree(3)
    checked = 0
    while checked < 10:
        splits = rng.standard_normal((3, 7))
        magnitudes = np.abs(splits)
        gaps = np.abs(magnitudes[:, :, None] - magnitudes[:, None, :])[:, ~np.eye(7, dtype=bool)]
        # min-gaps below the step would put a probe across an argmin switch
        if gaps.min() < 1e-3 or magnitudes.min() < 1e-3:
            continue
        weights = rng.standard_normal((3, topology.num_nodes))
        rewards = compute_rewards(splits, topology)
        analytic = rewards_backward(rewards, weights)
        numeric = finite_diff(lambda s: float(np.sum(weights * compute_rewards(s, topology).q)), splits)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)
        checked += 1


def test_hard_routing_ties_go_right(depth2):
    assert hard_leaves(np.zeros((1, 3)), depth2)[0] == 7
    assert hard_leaves(np.array([[-1.0, -1.0, 0.0]]), depth2)[0] == 4
