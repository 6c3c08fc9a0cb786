"""Adam optimizer with classical bias correction.

update = lr * m_hat / (sqrt(v_hat) + eps) with m_hat = m / (1 - beta1^t),
v_hat = v / (1 - beta2^t).  Updates are fully deterministic: identical
inputs produce bitwise-identical parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ValueError(f"betas must lie in (0,1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass
class AdamState:
    """Per-parameter moment estimates and step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def like(cls, param: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(param), v=np.zeros_like(param), t=0)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState,
              config: AdamConfig, name: str = "param"):
    """One in-place Adam update of a single parameter tensor.

    Returns ``(param, state)``; both are mutated.  Rejects non-finite
    gradients, naming the parameter.
    """
    if grad.shape != param.shape:
        raise ValueError(
            f"{name}: gradient shape {tuple(grad.shape)} != parameter shape "
            f"{tuple(param.shape)}")
    if state.m.shape != param.shape or state.v.shape != param.shape:
        raise ValueError(f"{name}: optimizer state shape mismatch")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError(f"non-finite gradient for {name}")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * np.square(grad)
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    param -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return param, state


@dataclass
class Adam:
    """Optimizer over a name-keyed parameter dict; state created lazily."""

    config: AdamConfig = field(default_factory=AdamConfig)
    state: dict[str, AdamState] = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        for name, param in params.items():
            if name not in grads or grads[name] is None:
                raise ValueError(f"missing gradient for {name}")
            st = self.state.get(name)
            if st is None:
                st = self.state[name] = AdamState.like(param)
            adam_step(param, grads[name], st, self.config, name=name)
