"""Adam with bias correction, and global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import AutodiffError, Tensor


@dataclass
class AdamState:
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)


class Adam:
    """Adam over a fixed, ordered list of parameter tensors.

    ``weight_decay`` adds ``weight_decay * param`` to each gradient before
    the moment updates (plain L2, off by default).
    """

    def __init__(self, params, learning_rate=2e-4, beta1=0.5, beta2=0.999,
                 epsilon=1e-8, weight_decay=0.0):
        self.params: list[Tensor] = list(params)
        self.state = AdamState(
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
            weight_decay=weight_decay,
            first_moment=[np.zeros_like(p.data) for p in self.params],
            second_moment=[np.zeros_like(p.data) for p in self.params],
        )

    @property
    def learning_rate(self) -> float:
        return self.state.learning_rate

    @learning_rate.setter
    def learning_rate(self, value: float):
        self.state.learning_rate = float(value)

    def step(self, grads: dict) -> None:
        missing = [i for i, p in enumerate(self.params) if p not in grads]
        if missing:
            raise AutodiffError(f"adam_step: no gradient for parameter(s) {missing}")
        s = self.state
        s.step_count += 1
        t = s.step_count
        bc1 = 1.0 - s.beta1**t
        bc2 = 1.0 - s.beta2**t
        for i, p in enumerate(self.params):
            g = grads[p]
            if s.weight_decay:
                g = g + s.weight_decay * p.data
            m = s.first_moment[i] = s.beta1 * s.first_moment[i] + (1.0 - s.beta1) * g
            v = s.second_moment[i] = s.beta2 * s.second_moment[i] + (1.0 - s.beta2) * g * g
            p.data = p.data - s.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + s.epsilon)


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads: dict, max_norm: float) -> dict:
    if not max_norm > 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads)
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}
