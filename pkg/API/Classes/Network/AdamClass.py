from dataclasses import dataclass, field
import logging

import numpy as np

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import InvalidConfig, ShapeMismatch

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    learning_rate: float = Config.LEARNING_RATE
    beta1: float = Config.ADAM_BETA1
    beta2: float = Config.ADAM_BETA2
    epsilon: float = Config.ADAM_EPSILON
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidConfig(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.step_count < 0:
            raise InvalidConfig(f"step_count must be >= 0, got {self.step_count}")


def adam_step(params, grads, state):
    """One bias-corrected Adam update.

    Pure: returns new ``(params, state)`` and leaves the arguments untouched.
    Entries of ``params`` without a gradient (running statistics) are carried
    over unchanged. Updated tensors keep their stored dtype.
    """
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = type(params)(params), dict(state.m), dict(state.v)
    for name, g in grads.items():
        if name not in params:
            raise ShapeMismatch(f"Gradient for unknown parameter '{name}'")
        theta = np.asarray(params[name])
        g = np.asarray(g, dtype=np.float64)
        if g.shape != theta.shape:
            raise ShapeMismatch(f"Gradient {g.shape} does not match parameter '{name}' {theta.shape}")
        m = b1 * state.m.get(name, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        updated = theta.astype(np.float64) - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        new_params[name] = updated.astype(theta.dtype)
        new_m[name], new_v[name] = m, v
    new_state = AdamState(state.learning_rate, b1, b2, state.epsilon, t, new_m, new_v)
    return new_params, new_state
