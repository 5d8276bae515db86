"""
Pointwise check that guided scores minimize a sample-adaptively weighted score-matching objective.

At a noisy point x_t the objective over a candidate score s is

    (1 + eta) p+(x_t) E_{p+(x|x_t)} ||g - s||^2 - eta p-(x_t) w(x_t) E_{p-(x|x_t)} ||g - s||^2

with transition score g = (x - x_t) / sigma^2 and adaptive weight w = p+(x_t) / p-(x_t). It is a scalar quadratic in
s; its minimizer is compared against (1 + eta) grad log p+ - eta grad log p-. The classifier-free case takes p+ as
the class-conditional and p- as the marginal.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm
from scipy.stats import t as student_t

from guidefree.common.utils import NULL_CLASS, ConfigError
from guidefree.numerics.rng import Rng
from guidefree.worlds.mixture import GaussianMixtureWorld

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreChannel:
    world: GaussianMixtureWorld
    class_id: Optional[int] = None

    def log_density(self, x_t: float, sigma: float) -> float:
        return float(self.world.log_density(np.array([x_t]), sigma, self.class_id)[0])

    def direct_density(self, x_t: float, sigma: float) -> float:
        """Density as a plain weighted sum of normal pdfs, without log-space arithmetic."""
        if self.class_id is None or self.class_id == NULL_CLASS:
            groups = [(prior, comps) for prior, comps in zip(self.world.priors, self.world.classes)]
        else:
            groups = [(1.0, self.world.classes[self.class_id])]
        total = 0.0
        for prior, components in groups:
            for k in components:
                total += prior * k.weight * norm.pdf(x_t, loc=k.mean[0], scale=np.sqrt(k.cov[0, 0] + sigma ** 2))
        return float(total)

    def score(self, x_t: float, sigma: float) -> float:
        return float(self.world.score(np.array([x_t]), sigma, self.class_id)[0, 0])

    def posterior_transition_scores(self, x_t: float, sigma: float, n: int, rng: Rng) -> np.ndarray:
        samples = self.world.posterior_sample(np.array([x_t]), sigma, n, rng, self.class_id)
        return (samples[:, 0] - x_t) / sigma ** 2


def standard_error_threshold(comparisons: int, samples: int, z: float = 3.0) -> float:
    """
    Deviation, in estimated standard errors, that `comparisons` independent sample means of `samples` draws stay
    below jointly with the probability a single normal mean stays within z standard errors.

    Student-t quantile with a Bonferroni split of the two-sided level; equals z for one comparison as samples grow.
    """
    if comparisons < 1 or samples < 2:
        raise ValueError('need comparisons >= 1 and samples >= 2, got {} and {}'.format(comparisons, samples))
    level = 2.0 * norm.sf(z)
    return float(student_t.isf(level / (2.0 * comparisons), df=samples - 1))


@dataclass
class GuidanceReport:
    eta: float
    sigma: float
    grid: np.ndarray
    analytic: np.ndarray
    estimate: np.ndarray
    standard_error: np.ndarray
    ratio_gap: float
    samples: int

    @property
    def deviation(self) -> np.ndarray:
        return np.abs(self.estimate - self.analytic)

    @property
    def max_deviation(self) -> float:
        return float(self.deviation.max())

    @property
    def z_scores(self) -> np.ndarray:
        return self.deviation / self.standard_error

    @property
    def max_z(self) -> float:
        return float(self.z_scores.max())

    def passed(self, z: float = 3.0) -> bool:
        return self.max_z < standard_error_threshold(len(self.grid), self.samples, z)


def _mean_and_variance(values: np.ndarray):
    """Sample mean and the estimated variance of that mean."""
    return float(values.mean()), float(values.var(ddof=1) / len(values))


def verify_guidance(plus: ScoreChannel, minus: ScoreChannel, eta: float, sigma: float, grid: Sequence[float],
                    mc_samples: int, rng: Rng) -> GuidanceReport:
    if plus.world.dim != 1 or minus.world.dim != 1:
        raise ConfigError('world', 'guidance verification runs on one-dimensional worlds')
    if not sigma > 0:
        raise ValueError('sigma must be positive, got {}'.format(sigma))
    grid = np.asarray(grid, dtype=np.float64)
    analytic, estimate, standard_error = [], [], []
    ratio_gap = 0.0
    for x_t in grid:
        log_plus, log_minus = plus.log_density(x_t, sigma), minus.log_density(x_t, sigma)
        if not np.isfinite(log_plus) or not np.isfinite(log_minus):
            raise ValueError('degenerate density at x_t={}'.format(x_t))
        p_plus, p_minus = np.exp(log_plus), np.exp(log_minus)
        weight = np.exp(log_plus - log_minus)
        direct = plus.direct_density(x_t, sigma) / minus.direct_density(x_t, sigma)
        ratio_gap = max(ratio_gap, abs(weight - direct) / abs(direct))

        m_plus, var_plus = _mean_and_variance(plus.posterior_transition_scores(x_t, sigma, mc_samples, rng))
        m_minus, var_minus = _mean_and_variance(minus.posterior_transition_scores(x_t, sigma, mc_samples, rng))

        # J(s) = a s^2 - 2 b s + const
        a_plus, a_minus = (1 + eta) * p_plus, eta * p_minus * weight
        a = a_plus - a_minus
        b = a_plus * m_plus - a_minus * m_minus
        estimate.append(b / a)
        standard_error.append(np.sqrt((a_plus / a) ** 2 * var_plus + (a_minus / a) ** 2 * var_minus))
        analytic.append((1 + eta) * plus.score(x_t, sigma) - eta * minus.score(x_t, sigma))

    report = GuidanceReport(eta, sigma, grid, np.array(analytic), np.array(estimate), np.array(standard_error),
                            ratio_gap, mc_samples)
    logger.debug('guidance check eta=%g sigma=%g: max deviation %.3e (max z %.2f)', eta, sigma,
                 report.max_deviation, report.max_z)
    return report


def verify_theorem3(world1d: GaussianMixtureWorld, eta: float, sigma: float, grid: Sequence[float], mc_samples: int,
                    rng: Rng, class_id: int = 0) -> GuidanceReport:
    """
    Classifier-free guidance: p+ is p_sigma(x|c), p- is p_sigma(x).
    """
    return verify_guidance(ScoreChannel(world1d, class_id), ScoreChannel(world1d, None), eta, sigma, grid,
                           mc_samples, rng)


def verify_marginal_score(world1d: GaussianMixtureWorld, sigma: float, grid: Sequence[float], mc_samples: int,
                          rng: Rng):
    """
    The marginal noised score equals the posterior mean of transition scores.

    :return: (absolute deviations, standard errors) per grid point
    """
    channel = ScoreChannel(world1d, None)
    deviations, errors = [], []
    for x_t in np.asarray(grid, dtype=np.float64):
        mean, variance = _mean_and_variance(channel.posterior_transition_scores(x_t, sigma, mc_samples, rng))
        deviations.append(abs(mean - channel.score(x_t, sigma)))
        errors.append(np.sqrt(variance))
    return np.array(deviations), np.array(errors)
