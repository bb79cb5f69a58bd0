import numpy as np
import pytest

from src.core.errors import ArgumentError
from src.models.configs import TrainConfig
from src.services.optimizers import OptimizerState, optimizer_step


def test_first_adam_step_is_minus_lr():
    params = {"p": np.array([0.0])}
    optimizer_step(OptimizerState(kind="adam", lr=0.1), params, {"p": np.array([1.0])})
    assert params["p"][0] == pytest.approx(-0.1, abs=1e-7)


@pytest.mark.parametrize("kind", ["adam", "qhadam"])
def test_zero_gradient_leaves_params(kind):
    params = {"w": np.array([[1.0, -2.0]])}
    state = OptimizerState(kind=kind, lr=0.5)
    for _ in range(3):
        optimizer_step(state, params, {"w": np.zeros((1, 2))})
    np.testing.assert_array_equal(params["w"], [[1.0, -2.0]])
    assert state.step == 3


def test_qhadam_with_full_momentum_weight_is_adam(rng):
    grads = [rng.standard_normal(4) for _ in range(5)]
    adam = {"p": np.ones(4)}
    qh = {"p": np.ones(4)}
    adam_state = OptimizerState(kind="adam", lr=0.01, beta1=0.9)
    qh_state = OptimizerState(kind="qhadam", lr=0.01, beta1=0.9, nu1=1.0)
    for g in grads:
        optimizer_step(adam_state, adam, {"p": g.copy()})
        optimizer_step(qh_state, qh, {"p": g.copy()})
    np.testing.assert_allclose(qh["p"], adam["p"], atol=1e-12)


def test_state_from_config_uses_qhadam_defaults():
    state = OptimizerState.from_config(TrainConfig(learning_rate=0.01))
    assert state.kind == "qhadam"
    assert state.beta1 == 0.995
    assert state.nu1 == 0.7
    assert OptimizerState.from_config(TrainConfig(optimizer="adam")).beta1 == 0.9


def test_shape_mismatch_rejected():
    with pytest.raises(ArgumentError):
        optimizer_step(OptimizerState(), {"p": np.zeros(2)}, {"p": np.zeros(3)})


def test_unknown_kind_rejected():
    with pytest.raises(ArgumentError):
        optimizer_step(OptimizerState(kind="sgd"), {"p": np.zeros(1)}, {"p": np.zeros(1)})
