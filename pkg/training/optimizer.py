# training/optimizer.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

logger = logging.getLogger(__name__)


class NonFiniteGradientError(FloatingPointError):
    """A gradient contained NaN or infinity; the run cannot continue."""


@dataclass
class OptimizerState:
    """Adam first/second moments per parameter and the step counter t."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            t=0,
        )

    def is_reset(self) -> bool:
        return self.t == 0 and all(
            not np.any(a) for acc in (self.m, self.v) for a in acc.values()
        )


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_by_global_norm(
    grads: Mapping[str, np.ndarray], max_norm: float
) -> dict[str, np.ndarray]:
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return dict(grads)
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    *,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> OptimizerState:
    """
    One bias-corrected Adam update, applied to `params` in place.

    Raises NonFiniteGradientError before touching any parameter if a gradient
    is NaN or infinite.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"Gradient for unknown parameter {name}")
        if g.shape != params[name].shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"Non-finite gradient for {name} at step {state.t + 1}")

    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    step_size = learning_rate / bc1

    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        denom = np.sqrt(v / bc2) + epsilon
        params[name] -= step_size * m / denom
    return state


class Adam:
    """
    Adam with an optional linear decay of the learning rate to zero over
    `total_steps`, counted from the step count of the state it starts with.
    """

    def __init__(
        self,
        params: Mapping[str, np.ndarray],
        *,
        learning_rate: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        epsilon: float = 1e-8,
        clip_norm: Optional[float] = None,
        total_steps: Optional[int] = None,
        state: Optional[OptimizerState] = None,
    ):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.params = params
        self.learning_rate = learning_rate
        self.betas = betas
        self.epsilon = epsilon
        self.clip_norm = clip_norm
        self.total_steps = total_steps
        self.state = state if state is not None else OptimizerState.zeros_like(params)
        self.start_step = self.state.t

    def current_learning_rate(self) -> float:
        if not self.total_steps:
            return self.learning_rate
        remaining = max(self.total_steps - (self.state.t - self.start_step), 0)
        return self.learning_rate * remaining / self.total_steps

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        if self.clip_norm is not None:
            grads = clip_by_global_norm(grads, self.clip_norm)
        adam_step(
            self.params,
            grads,
            self.state,
            learning_rate=self.current_learning_rate(),
            beta1=self.betas[0],
            beta2=self.betas[1],
            epsilon=self.epsilon,
        )

    def reset(self) -> None:
        self.state = OptimizerState.zeros_like(self.params)
        self.start_step = 0
