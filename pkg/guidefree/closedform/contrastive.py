"""
Preference-style objectives on discrete problems: the class-conditional DPO optimum, its reward, the CCA optimum and
a numerical oracle that maximizes the exact population objectives directly.

Negatives are drawn from the marginal p(x), i.e. from a class c_tilde ~ p(c) drawn independently of c.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from guidefree.closedform.simplex import SimplexDist
from guidefree.common.utils import ConvergenceError, NormalizationError
from guidefree.worlds.discrete import DiscreteProblem

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-6


class ContrastiveKind(enum.Enum):
    CCDPO = 'ccdpo'
    CCA = 'cca'


@dataclass(frozen=True)
class RewardTable:
    values: np.ndarray
    infinite: np.ndarray


def _log_ratio(problem: DiscreteProblem, c: int) -> np.ndarray:
    p = problem.table[:, c]
    assert not np.any((p > 0) & (problem.marginal == 0)), 'p(x|c) > 0 with p(x) = 0 contradicts positive priors'
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.log(p) - np.log(problem.marginal)


def _log_tilted(problem: DiscreteProblem, p_ref: np.ndarray, c: int, beta: float) -> np.ndarray:
    """log of p_ref(x|c) * (p(x|c) / p(x))^(1/beta), -inf where the product is 0."""
    if not beta > 0:
        raise ValueError('beta must be positive, got {}'.format(beta))
    p_ref = np.asarray(p_ref, dtype=np.float64)[:, c]
    p = problem.table[:, c]
    out = np.full(problem.support_size, -np.inf)
    live = (p_ref > 0) & (p > 0)
    out[live] = np.log(p_ref[live]) + _log_ratio(problem, c)[live] / beta
    if not np.any(live):
        raise NormalizationError('p_ref * (p / p_bar)^(1/beta) is zero everywhere for class {}'.format(c))
    return out


def ccdpo_optimum(problem: DiscreteProblem, p_ref: np.ndarray, c: int, beta: float) -> SimplexDist:
    """
    p_ref(x|c) * (p(x|c) / p(x))^(1/beta), renormalized.
    """
    log_q = _log_tilted(problem, p_ref, c, beta)
    q = np.exp(log_q - log_q.max())
    return SimplexDist(q / q.sum())


def cca_normalizing_lambda(problem: DiscreteProblem, p_ref: np.ndarray, c: int, beta: float) -> float:
    """
    The lambda for which the CCA optimum is normalized: lambda^(1/beta) = sum_x p_ref (p / p_bar)^(1/beta).
    """
    log_q = _log_tilted(problem, p_ref, c, beta)
    top = log_q.max()
    return float(np.exp(beta * (top + np.log(np.exp(log_q - top).sum()))))


def cca_optimum(problem: DiscreteProblem, p_ref: np.ndarray, c: int, beta: float, lam: float) \
        -> Tuple[SimplexDist, float]:
    """
    Unnormalized CCA optimum p_ref (p / p_bar)^(1/beta) lambda^(-1/beta).

    :return: (the optimum renormalized, its total mass before renormalization)
    """
    if not lam > 0:
        raise ValueError('lambda must be positive, got {}'.format(lam))
    log_q = _log_tilted(problem, p_ref, c, beta) - np.log(lam) / beta
    q = np.exp(log_q)
    return SimplexDist(q / q.sum()), float(q.sum())


def dpo_optimal_reward(problem: DiscreteProblem, c: int) -> RewardTable:
    """
    r*(x|c) = log p(x|c) / p(x) with the free constant set to 0. Where p(x|c) = 0 < p(x) the reward is -inf.
    """
    values = _log_ratio(problem, c)
    values = np.where((problem.table[:, c] == 0) & (problem.marginal == 0), 0.0, values)
    return RewardTable(values, ~np.isfinite(values))


def ccdpo_population_objective(problem: DiscreteProblem, p_ref: np.ndarray, c: int, beta: float, log_q: np.ndarray):
    """
    E_{x_w~p(x|c), x_l~p(x)} log sigmoid(beta log q(x_w)/p_ref(x_w) - beta log q(x_l)/p_ref(x_l)) and its gradient
    with respect to log_q.
    """
    reward = beta * (log_q - np.log(np.asarray(p_ref, dtype=np.float64)[:, c]))
    margin = reward[:, None] - reward[None, :]
    weight = np.outer(problem.table[:, c], problem.marginal)
    value = float((weight * log_expit(margin)).sum())
    slack = weight * expit(-margin)
    grad = beta * (slack.sum(axis=1) - slack.sum(axis=0))
    return value, grad


def cca_population_objective(problem: DiscreteProblem, p_ref: np.ndarray, c: int, beta: float, lam: float,
                             log_q: np.ndarray):
    """
    E_{p(x|c)} log sigmoid(beta log q/p_ref) + lambda E_{p(x)} log sigmoid(-beta log q/p_ref) for an unnormalized
    table q, and its gradient with respect to log_q.
    """
    reward = beta * (log_q - np.log(np.asarray(p_ref, dtype=np.float64)[:, c]))
    p = problem.table[:, c]
    value = float(p @ log_expit(reward) + lam * problem.marginal @ log_expit(-reward))
    grad = beta * (p * expit(-reward) - lam * problem.marginal * expit(reward))
    return value, grad


def brute_force_contrastive(problem: DiscreteProblem, p_ref: np.ndarray, c: int, kind: ContrastiveKind, beta: float,
                            lam: Optional[float] = None, iterations: int = 10_000) -> Tuple[SimplexDist, float]:
    """
    Maximizes the exact population objective over an explicit table model with L-BFGS-B.

    CC-DPO only sees reward differences, so log q(x_0) is pinned to log p_ref(x_0) and the result is normalized.
    CCA optimizes an unnormalized positive table; lambda defaults to the normalizing value.

    :return: (the optimum as a distribution, the mass of the optimized table before normalization)
    """
    if not beta > 0:
        raise ValueError('beta must be positive, got {}'.format(beta))
    anchor = np.log(np.asarray(p_ref, dtype=np.float64)[:, c])
    if kind is ContrastiveKind.CCDPO:
        def negative(free):
            log_q = np.concatenate([anchor[:1], free])
            value, grad = ccdpo_population_objective(problem, p_ref, c, beta, log_q)
            return -value, -grad[1:]
        start = anchor[1:]
    else:
        lam = cca_normalizing_lambda(problem, p_ref, c, beta) if lam is None else lam

        def negative(free):
            value, grad = cca_population_objective(problem, p_ref, c, beta, lam, free)
            return -value, -grad
        start = anchor

    result = minimize(negative, start, jac=True, method='L-BFGS-B',
                      options={'maxiter': iterations, 'gtol': 1e-13, 'ftol': 1e-16})
    grad_norm = float(np.abs(result.jac).max()) if len(result.jac) else 0.0
    if grad_norm > GRADIENT_TOLERANCE:
        raise ConvergenceError(int(result.nit), grad_norm)
    logger.debug('brute_force_contrastive(%s): %d iterations, |grad| %.2e', kind.value, result.nit, grad_norm)

    log_q = np.concatenate([anchor[:1], result.x]) if kind is ContrastiveKind.CCDPO else result.x
    q = np.exp(log_q - log_q.max())
    mass = float(np.exp(log_q).sum())
    return SimplexDist(q / q.sum()), mass
