from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from guidefree.common.utils import ShapeError


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moments: List[np.ndarray] = field(default_factory=list)
    second_moments: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def create(cls, params: List[np.ndarray], learning_rate: float = 1e-3, **kwargs) -> AdamState:
        return cls(
            learning_rate=learning_rate,
            first_moments=[np.zeros_like(p) for p in params],
            second_moments=[np.zeros_like(p) for p in params],
            **kwargs
        )


def adam_step(state: AdamState, params: List[np.ndarray], grads: List[np.ndarray]) \
        -> Tuple[List[np.ndarray], AdamState]:
    """
    One bias-corrected Adam update. Inputs are left untouched; new parameter and moment arrays are returned.
    """
    if not state.first_moments:
        state = AdamState.create(
            params, state.learning_rate, beta1=state.beta1, beta2=state.beta2, epsilon=state.epsilon
        )
    if len(params) != len(grads) or len(params) != len(state.first_moments):
        raise ShapeError('expected {} parameter buffers, got {} params and {} grads'.format(
            len(state.first_moments), len(params), len(grads)))

    step = state.step + 1
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step
    new_params, first, second = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moments, state.second_moments):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError('shape mismatch: param {}, grad {}, moment {}'.format(p.shape, g.shape, m.shape))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        new_params.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        first.append(m)
        second.append(v)

    new_state = AdamState(
        state.learning_rate, state.beta1, state.beta2, state.epsilon, step, first, second
    )
    return new_params, new_state
