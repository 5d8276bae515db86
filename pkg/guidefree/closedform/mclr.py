"""
Closed-form optimum of likelihood training with the inter-class likelihood-ratio regularizer, and the exact
population functionals it is checked against.

For class c the objective reduces to maximizing sum_x h(x) log q(x) on the floored simplex with
h = base + eta * (p(x|c) - p(x)), where base is p(x|c) when training from scratch and p_ref(x|c) when fine-tuning.
The maximizer is max(h / lambda*, delta), with lambda* the root of A(lambda) = 1 - delta * |{h <= 0}|.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.special import xlogy

from guidefree.closedform.simplex import SimplexDist, SimplexObjective
from guidefree.common.utils import ConvergenceError, NormalizationError
from guidefree.worlds.discrete import DiscreteProblem

logger = logging.getLogger(__name__)

MAX_BISECTION_ITERATIONS = 200
BISECTION_TOLERANCE = 1e-12
LAMBDA_LOW = 1e-12


@dataclass
class BisectionReport:
    lam: float
    iterations: int
    residual: float
    bracket: tuple = (0.0, 0.0)
    trace: List[Tuple[float, float]] = field(default_factory=list)


def sum_of_difference(problem: DiscreteProblem, c: int, eta: float, p_ref: Optional[np.ndarray] = None) -> np.ndarray:
    """
    h(x|c) = base(x|c) + eta * (p(x|c) - p(x)).
    """
    if eta < 0:
        raise ValueError('eta must be >= 0, got {}'.format(eta))
    base = problem.table[:, c] if p_ref is None else np.asarray(p_ref, dtype=np.float64)[:, c]
    return base + eta * (problem.table[:, c] - problem.marginal)


def floor_mass(h: np.ndarray, lam: float, delta: float) -> float:
    """
    A(lambda) = sum over {h > 0} of max(h / lambda, delta); non-increasing in lambda.
    """
    positive = h[h > 0]
    return float(np.maximum(positive / lam, delta).sum())


def mclr_optimum(problem: DiscreteProblem, c: int, eta: float, delta: float = 1e-9,
                 p_ref: Optional[np.ndarray] = None):
    """
    Maximizer of sum_x h(x) log q(x) over {q >= delta, sum(q) = 1}.

    :param p_ref: Optional reference table [S, M]; switches h to the fine-tuning form p_ref + eta (p - p_bar).
    :return: (SimplexDist, BisectionReport)
    """
    s = problem.support_size
    if not 0 < delta < 1.0 / s:
        raise ValueError('delta must lie in (0, 1/S) = (0, {}), got {}'.format(1.0 / s, delta))
    h = sum_of_difference(problem, c, eta, p_ref)
    if not np.any(h > 0):
        raise NormalizationError('h(x|c) <= 0 everywhere for class {}'.format(c))

    target = 1.0 - delta * np.count_nonzero(h <= 0)
    low, high = LAMBDA_LOW, float(h.max()) / delta
    assert floor_mass(h, low, delta) >= target >= floor_mass(h, high, delta)

    # geometric bisection: lambda spans many decades
    trace = []
    lam, residual = high, abs(floor_mass(h, high, delta) - target)
    for iteration in range(1, MAX_BISECTION_ITERATIONS + 1):
        lam = np.sqrt(low * high)
        mass = floor_mass(h, lam, delta)
        trace.append((float(lam), mass))
        residual = abs(mass - target)
        if residual <= BISECTION_TOLERANCE:
            break
        if mass > target:
            low = lam
        else:
            high = lam
    else:
        raise ConvergenceError(MAX_BISECTION_ITERATIONS, residual)

    logger.debug('bisection for class %d: lambda*=%.15g after %d iterations', c, lam, iteration)
    q = np.maximum(h / lam, delta)
    return SimplexDist(q), BisectionReport(float(lam), iteration, residual, (LAMBDA_LOW, float(h.max()) / delta),
                                           trace)


def mclr_optimum_limit(problem: DiscreteProblem, c: int, eta: float,
                       p_ref: Optional[np.ndarray] = None) -> SimplexDist:
    """
    The delta -> 0 optimum: max(h, 0) renormalized.
    """
    h = np.maximum(sum_of_difference(problem, c, eta, p_ref), 0.0)
    if h.sum() <= 0:
        raise NormalizationError('h(x|c) <= 0 everywhere for class {}'.format(c))
    return SimplexDist(h / h.sum())


def mclr_objective(problem: DiscreteProblem, c: int, eta: float) -> SimplexObjective:
    """
    E_c E_{x~p(x|c)} log q(x|c) + eta * E_{c, c_tilde, x~p(x|c)} log q(x|c) / q(x|c_tilde), with c_tilde ~ p(c)
    independently, as a function of the column q(.|c). Equals the KL form with p_ref = p(x|c) up to a constant.
    """
    return mclr_kl_objective(problem, c, eta, problem.table)


def population_kl(p_ref: np.ndarray, model_table: np.ndarray, priors: np.ndarray) -> Union[float, np.ndarray]:
    """
    E_c KL(p_ref(.|c) || q(.|c)) for a model table [S, M] or a batch of them [R, S, M].
    """
    per_class = (xlogy(p_ref, p_ref) - xlogy(p_ref, model_table)).sum(axis=-2)
    return per_class @ priors


def mclr_kl_objective(problem: DiscreteProblem, c: int, eta: float, p_ref: np.ndarray,
                      model_table: Optional[np.ndarray] = None) -> SimplexObjective:
    """
    -E_c KL(p_ref(.|c) || q(.|c)) + eta * regularizer_pairwise, evaluated on the full model table with column c
    replaced by the candidate, divided by p(c). The other columns stay at model_table (uniform by default) and only
    shift the value. The gradient is enumerated over the same class pairs as the value.
    """
    p_ref = np.asarray(p_ref, dtype=np.float64)
    s, m = problem.table.shape
    base = np.full((s, m), 1.0 / s) if model_table is None else np.array(model_table, dtype=np.float64)
    weight = problem.priors[c]
    pair_weight = np.zeros(s)
    for c_a in range(m):
        for c_b in range(m):
            pair = problem.priors[c_a] * problem.priors[c_b] * problem.table[:, c_a]
            if c_a == c:
                pair_weight += pair
            if c_b == c:
                pair_weight -= pair

    def objective(q):
        tables = np.repeat(base[None], len(q), axis=0)
        tables[:, :, c] = q
        values = -population_kl(p_ref, tables, problem.priors) + eta * regularizer_pairwise(problem, tables)
        grads = (weight * p_ref[:, c] + eta * pair_weight)[None, :] / q
        return values / weight, grads / weight

    return objective


def regularizer_pairwise(problem: DiscreteProblem, model_table: np.ndarray) -> Union[float, np.ndarray]:
    """
    E_{c, c_tilde, x~p(x|c)} log q(x|c) / q(x|c_tilde), enumerated over all class pairs. A batch of model tables
    [R, S, M] gives one value per table.
    """
    log_q = np.log(model_table)
    total = 0.0
    for c in range(problem.num_classes):
        for c_tilde in range(problem.num_classes):
            weight = problem.priors[c] * problem.priors[c_tilde]
            total = total + weight * (log_q[..., c] - log_q[..., c_tilde]) @ problem.table[:, c]
    return total


def regularizer_symmetric(problem: DiscreteProblem, model_table: np.ndarray) -> float:
    """
    1/2 E_{c, c_tilde, x~p(.|c), y~p(.|c_tilde)} [log q(x|c)/q(x|c_tilde) + log q(y|c_tilde)/q(y|c)].
    """
    log_q = np.log(model_table)
    total = 0.0
    for c in range(problem.num_classes):
        for c_tilde in range(problem.num_classes):
            weight = problem.priors[c] * problem.priors[c_tilde]
            forward = problem.table[:, c] @ (log_q[:, c] - log_q[:, c_tilde])
            backward = problem.table[:, c_tilde] @ (log_q[:, c_tilde] - log_q[:, c])
            total += 0.5 * weight * (forward + backward)
    return float(total)


def regularizer_form2(problem: DiscreteProblem, model_table: np.ndarray) -> float:
    """
    E_{c, x~p(.|c), y~p(.)} log q(x|c) / q(y|c).
    """
    log_q = np.log(model_table)
    total = 0.0
    for c in range(problem.num_classes):
        total += problem.priors[c] * (problem.table[:, c] @ log_q[:, c] - problem.marginal @ log_q[:, c])
    return float(total)
