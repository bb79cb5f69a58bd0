import numpy as np
import pytest

from src.core.errors import ArgumentError, UsageError
from src.models.configs import PredictorSpec
from src.models.schemas import PredictorParams, SplitParams
from src.services import model_core, tree_solver
from src.services.reference_oracles import finite_diff
from src.services.reward_engine import compute_rewards
from src.services.tree_topology import build_complete_tree


def test_zero_split_params_give_zero_values(depth2):
    params = SplitParams(weights=np.zeros((3, 2)), bias=np.zeros(3))
    assert not model_core.split_forward(params, np.ones((4, 2))).any()


def test_identity_split_value():
    params = SplitParams(weights=np.array([[1.0, -1.0]]), bias=np.array([0.5]))
    assert model_core.split_forward(params, np.array([[2.0, 1.0]]))[0, 0] == pytest.approx(1.5)


def test_elu_split_value():
    params = SplitParams(weights=np.array([[1.0]]), bias=np.zeros(1), activation="elu")
    assert model_core.split_forward(params, np.array([[-1.0]]))[0, 0] == pytest.approx(np.exp(-1.0) - 1.0)


def test_split_width_mismatch():
    params = SplitParams(weights=np.zeros((1, 3)), bias=np.zeros(1))
    with pytest.raises(ArgumentError) as exc:
        model_core.split_forward(params, np.zeros((2, 2)))
    assert exc.value.code == "argument.features"


def test_init_split_params_bounds(rng, depth2):
    params = model_core.init_split_params(depth2, 4, rng)
    assert params.weights.shape == (3, 4)
    assert np.all(np.abs(params.weights) <= 0.5)
    assert not params.bias.any()


def test_split_backward_matches_finite_differences(rng):
    X = rng.standard_normal((5, 3))
    weights = rng.standard_normal((3, 3))
    upstream = rng.standard_normal((5, 3))
    for activation in ("identity", "elu"):
        params = SplitParams(weights=weights, bias=np.zeros(3), activation=activation)
        grad_w, _ = model_core.split_backward(params, X, upstream)

        def fn(w):
            return float(np.sum(upstream * model_core.split_forward(SplitParams(w, np.zeros(3), activation), X)))

        np.testing.assert_allclose(grad_w, finite_diff(fn, weights), rtol=1e-5, atol=1e-7)


def test_init_bias_root_is_negated_mean(depth1):
    params = SplitParams(weights=np.array([[1.0]]), bias=np.zeros(1))
    initialised = model_core.init_bias(params, np.array([[0.2], [0.4]]), depth1)
    assert initialised.bias[0] == pytest.approx(-0.3)


def test_init_bias_unreached_nodes_stay_zero(depth2):
    params = SplitParams(weights=np.ones((3, 1)), bias=np.zeros(3))
    initialised = model_core.init_bias(params, np.array([[1.0]]), depth2)
    np.testing.assert_allclose(initialised.bias, [-1.0, 0.0, 0.0])


def test_init_bias_centres_root_and_keeps_weights(rng):
    topology = build_complete_tree(3)
    X = rng.standard_normal((256, 4))
    params = model_core.init_split_params(topology, 4, rng)
    weights_before = params.weights.copy()
    initialised = model_core.init_bias(params, X, topology)
    np.testing.assert_array_equal(initialised.weights, weights_before)
    splits = model_core.split_forward(initialised, X)
    assert splits[:, 0].mean() == pytest.approx(0.0, abs=1e-12)
    q = compute_rewards(splits, topology).q
    assert (q[:, 1] > 0).any() and (q[:, 2] > 0).any()


def test_init_bias_rejects_empty(depth1):
    with pytest.raises(ArgumentError):
        model_core.init_bias(SplitParams(np.ones((1, 1)), np.zeros(1)), np.zeros((0, 1)), depth1)


def test_linear_predictor_zero_weights(rng):
    params = model_core.init_predictor_params(PredictorSpec(), 2, 3, 1, rng)
    params.weights[0][:] = 0.0
    assert not model_core.predictor_forward(params, np.ones((4, 2)), np.ones((4, 3))).any()


def test_identity_predictor_on_z(solve_example_q, depth1, unit_lambda):
    z = tree_solver.solve(solve_example_q, unit_lambda, depth1).z
    params = PredictorParams(weights=[np.eye(3)], biases=[np.zeros(3)], use_features=False)
    np.testing.assert_array_equal(model_core.predictor_forward(params, None, z), z)


def test_predictor_width_mismatch(rng):
    params = model_core.init_predictor_params(PredictorSpec(use_features=False), 2, 3, 1, rng)
    with pytest.raises(ArgumentError) as exc:
        model_core.predictor_forward(params, None, np.ones((2, 7)))
    assert exc.value.code == "argument.width"


def test_mlp_dropout_is_reproducible_with_seed(rng):
    spec = PredictorSpec(kind="mlp", num_layers=3, hidden_dim=8, dropout=0.3)
    params = model_core.init_predictor_params(spec, 2, 3, 1, rng)
    X, Z = rng.standard_normal((5, 2)), rng.uniform(size=(5, 3))
    first = model_core.predictor_forward(params, X, Z, train_mode=True, rng=np.random.default_rng(7))
    second = model_core.predictor_forward(params, X, Z, train_mode=True, rng=np.random.default_rng(7))
    np.testing.assert_array_equal(first, second)
    np.testing.assert_array_equal(
        model_core.predictor_forward(params, X, Z), model_core.predictor_forward(params, X, Z)
    )


def test_dropout_needs_generator(rng):
    params = model_core.init_predictor_params(PredictorSpec(kind="mlp", dropout=0.5), 2, 3, 1, rng)
    with pytest.raises(UsageError):
        model_core.predictor_forward(params, np.ones((1, 2)), np.ones((1, 3)), train_mode=True)


def test_predictor_backward_matches_finite_differences(rng):
    spec = PredictorSpec(kind="mlp", num_layers=2, hidden_dim=4)
    params = model_core.init_predictor_params(spec, 2, 3, 2, rng)
    X, Z = rng.standard_normal((6, 2)), rng.uniform(size=(6, 3))
    upstream = rng.standard_normal((6, 2))
    outputs, cache = model_core._predictor_pass(params, X, Z, False, None)
    grad_w, _, grad_input = model_core.predictor_backward(params, cache, upstream)

    def fn(w0):
        trial = PredictorParams([w0, params.weights[1]], params.biases, use_features=True)
        return float(np.sum(upstream * model_core.predictor_forward(trial, X, Z)))

    np.testing.assert_allclose(grad_w[0], finite_diff(fn, params.weights[0]), rtol=1e-5, atol=1e-7)
    numeric_z = finite_diff(lambda z: float(np.sum(upstream * model_core.predictor_forward(params, X, z))), Z)
    np.testing.assert_allclose(grad_input[:, 2:], numeric_z, rtol=1e-5, atol=1e-7)


def test_mse_examples():
    loss, grad = model_core.loss_and_grad("mse", np.array([[1.0], [3.0]]), np.zeros((2, 1)))
    assert loss == pytest.approx(5.0)
    np.testing.assert_allclose(grad, [[1.0], [3.0]])
    loss, grad = model_core.loss_and_grad("mse", np.ones((3, 1)), np.ones(3))
    assert loss == 0.0 and not grad.any()


def test_bce_at_zero_logit():
    loss, grad = model_core.loss_and_grad("bce", np.zeros((1, 1)), np.ones(1))
    assert loss == pytest.approx(np.log(2.0))
    assert grad[0, 0] == pytest.approx(-0.5)


def test_bce_rejects_non_binary_targets():
    with pytest.raises(ArgumentError) as exc:
        model_core.loss_and_grad("bce", np.zeros((2, 1)), np.array([0.0, 0.5]))
    assert exc.value.code == "argument.targets"


def test_error_rate_thresholds_logits():
    assert model_core.error_rate(np.array([-1.0, 0.5, 2.0, -0.1]), np.array([0, 1, 0, 0])) == 0.25


def test_init_bias_halves_symmetric_data(depth1):
    X = np.array([[-3.0], [-1.0], [1.0], [3.0], [-2.0], [2.0]])
    params = SplitParams(weights=np.full((1, 1), 0.7), bias=np.zeros(1))
    initialised = model_core.init_bias(params, X, depth1)
    q = compute_rewards(model_core.split_forward(initialised, X), depth1).q
    assert int((q[:, 1] > 0).sum()) == 3
    assert int((q[:, 2] > 0).sum()) == 3


def test_init_bias_splits_gaussian_data_evenly():
    rng = np.random.default_rng(256)
    topology = build_complete_tree(2)
    X = rng.standard_normal((256, 4))
    initialised = model_core.init_bias(model_core.init_split_params(topology, 4, rng), X, topology)
    q = compute_rewards(model_core.split_forward(initialised, X), topology).q
    root_sides = [(q[:, child - 1] > 0).sum() for child in (2, 3)]
    assert min(root_sides) >= 0.4 * 256
    for t in (2, 3):
        reached = q[:, t - 1] > 0
        sides = [(q[reached, child - 1] > 0).sum() for child in (2 * t, 2 * t + 1)]
        assert min(sides) >= 0.25 * reached.sum()
