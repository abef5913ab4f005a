"""Adam with bias correction and time-based learning-rate decay.

The effective rate of update number t (counting from 0) is
lr / (1 + decay * t), so the first update runs at the base rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lac.errors import NumericError


@dataclass
class AdamConfig:
    learning_rate: float = 0.01
    decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: list[tuple[str, np.ndarray]]) -> "AdamState":
        return cls(
            m={name: np.zeros_like(p) for name, p in params},
            v={name: np.zeros_like(p) for name, p in params},
            step=0,
        )


def adam_step(params: list[tuple[str, np.ndarray]], grads: dict[str, np.ndarray],
              state: AdamState, config: AdamConfig) -> None:
    """Apply one Adam update in place to every parameter array."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    lr_t = config.learning_rate / (1.0 + config.decay * state.step)
    state.step += 1
    t = state.step
    bc1 = 1.0 - config.beta1 ** t
    bc2 = 1.0 - config.beta2 ** t
    for name, p in params:
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * (g * g)
        p -= lr_t * (m / bc1) / (np.sqrt(v / bc2) + config.epsilon)
