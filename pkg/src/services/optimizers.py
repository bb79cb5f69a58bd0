"""
Adam and quasi-hyperbolic Adam (nu2 = 1) over a dict of named parameter arrays.
"""
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from src.core.errors import ArgumentError
from src.models.configs import TrainConfig


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    nu1: float = 0.7
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: TrainConfig) -> "OptimizerState":
        return cls(
            kind=config.optimizer,
            lr=config.learning_rate,
            beta1=config.effective_beta1,
            beta2=config.beta2,
            nu1=config.nu1,
            eps=config.eps,
        )


def optimizer_step(state: OptimizerState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> OptimizerState:
    """
    Apply one update in place to every array in ``params``

    Adam:    p -= lr * m_hat / (sqrt(v_hat) + eps)
    QHAdam:  p -= lr * ((1 - nu1) g + nu1 m_hat) / (sqrt(v_hat) + eps)
    """
    if state.kind not in ("adam", "qhadam"):
        raise ArgumentError(f"unknown optimizer '{state.kind}'", code="config.optimizer")
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ArgumentError(f"gradient for {name} has shape {grad.shape}, expected {param.shape}",
                                code="argument.shape")
        m = state.m.setdefault(name, np.zeros_like(param))
        v = state.v.setdefault(name, np.zeros_like(param))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        direction = m_hat if state.kind == "adam" else (1.0 - state.nu1) * grad + state.nu1 * m_hat
        param -= state.lr * direction / (np.sqrt(v_hat) + state.eps)
    return state
