"""
Distributions on the floored simplex and a projected-gradient oracle over it.

The floored simplex is {q : q >= delta, sum(q) = 1}. Projection shifts by delta and projects onto the simplex of mass
1 - S * delta with the sort-based Euclidean projection.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from guidefree.common.utils import total_variation
from guidefree.numerics.rng import Rng, make_rng

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-12

# Objective over a batch of candidate distributions: Q [R, S] -> (values [R], gradients [R, S])
SimplexObjective = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True, eq=False)
class SimplexDist:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, 'probs', probs)
        if probs.ndim != 1 or np.any(probs < 0) or abs(probs.sum() - 1.0) > SIMPLEX_TOLERANCE:
            raise ValueError('not a probability vector: {}'.format(probs.tolist()))

    @property
    def support_size(self) -> int:
        return len(self.probs)

    def tv(self, other) -> float:
        other = other.probs if isinstance(other, SimplexDist) else other
        return total_variation(self.probs, other)


def project_floored_simplex(y: np.ndarray, delta: float = 0.0) -> np.ndarray:
    """
    Euclidean projection of each row of y onto {q >= delta, sum(q) = 1}.
    """
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    s = y.shape[1]
    mass = 1.0 - s * delta
    if mass < 0:
        raise ValueError('delta {} too large for support size {}'.format(delta, s))
    shifted = y - delta
    u = -np.sort(-shifted, axis=1)
    cumulative = np.cumsum(u, axis=1) - mass
    index = np.arange(1, s + 1)
    rho = np.count_nonzero(u - cumulative / index > 0, axis=1)
    theta = cumulative[np.arange(len(y)), rho - 1] / rho
    return np.maximum(shifted - theta[:, None], 0.0) + delta


def brute_force_simplex(objective: SimplexObjective, support_size: int, delta: float, iterations: int = 3000,
                        restarts: int = 50, rng: Optional[Rng] = None, tolerance: float = 1e-13) -> SimplexDist:
    """
    Maximizes an exactly computable objective over the floored simplex.

    Projected gradient ascent with Barzilai-Borwein step lengths and Armijo backtracking, run from `restarts` random
    starting points at once. Returns the best final iterate.
    """
    rng = make_rng(0) if rng is None else rng
    q = project_floored_simplex(rng.dirichlet(np.ones(support_size), size=restarts), delta)
    values, grads = objective(q)
    step = np.full(restarts, 0.1)
    for iteration in range(iterations):
        stationarity = np.abs(project_floored_simplex(q + grads, delta) - q).max(axis=1)
        if np.all(stationarity < tolerance):
            break
        direction = project_floored_simplex(q + step[:, None] * grads, delta) - q
        slope = (grads * direction).sum(axis=1)
        t = np.ones(restarts)
        for _ in range(40):
            candidate = q + t[:, None] * direction
            new_values, new_grads = objective(candidate)
            accepted = new_values >= values + 1e-4 * t * slope
            if np.all(accepted):
                break
            t = np.where(accepted, t, 0.5 * t)
        s = candidate - q
        y = new_grads - grads
        curvature = -(s * y).sum(axis=1)
        step = np.where(curvature > 0, np.clip((s * s).sum(axis=1) / np.maximum(curvature, 1e-300), 1e-12, 1e12), 0.1)
        q, values, grads = candidate, new_values, new_grads
    else:
        logger.debug('brute_force_simplex stopped at the iteration cap (%d)', iterations)
    best = int(np.argmax(values))
    logger.debug('brute_force_simplex: best restart %d of %d, value %.15g', best, restarts, values[best])
    return SimplexDist(q[best] / q[best].sum())


def expected_log_objective(weights: np.ndarray) -> SimplexObjective:
    """
    sum_x weights(x) * log q(x) for a fixed (possibly signed) weight vector.
    """
    weights = np.asarray(weights, dtype=np.float64)

    def objective(q):
        return np.log(q) @ weights, weights[None, :] / q

    return objective
