"""
Deterministic probability-flow sampling with optional guidance.

With sigma as the clock the reverse ODE reads dx/dsigma = -sigma * s(x, sigma). Integration uses Heun's method on the
sigma grid and a single Euler step for the final interval down to sigma = 0.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from guidefree.common.utils import NULL_CLASS, ConfigError, DivergenceError, ShapeError
from guidefree.diffusion.schedule import NoiseSchedule, sigma_grid
from guidefree.numerics.network import DenoiserModel, forward
from guidefree.numerics.rng import Rng

logger = logging.getLogger(__name__)

ScoreSource = Callable[[np.ndarray, float, int], np.ndarray]


class GuidanceMode(enum.Enum):
    NONE = 'none'
    CFG = 'cfg'
    GENERIC = 'generic'


@dataclass(frozen=True)
class GuidanceSpec:
    """
    mode=cfg pairs the class channel with the null-class channel; mode=generic pairs it with `negative_class`.
    """
    mode: GuidanceMode = GuidanceMode.NONE
    gamma: float = 0.0
    negative_class: Optional[int] = None

    def __post_init__(self):
        if self.gamma < -1:
            raise ConfigError('guidance.gamma', 'must be >= -1, got {}'.format(self.gamma))
        if self.mode is GuidanceMode.GENERIC and self.negative_class is None:
            raise ConfigError('guidance.negative_class', 'generic guidance needs a negative class')

    @classmethod
    def cfg(cls, gamma: float) -> GuidanceSpec:
        return cls(GuidanceMode.CFG, gamma)

    def to_config(self):
        return {'mode': self.mode.value, 'gamma': self.gamma, 'negative_class': self.negative_class}

    @classmethod
    def from_config(cls, config) -> GuidanceSpec:
        try:
            mode = GuidanceMode(config.get('mode', 'none'))
        except ValueError as e:
            raise ConfigError('guidance.mode', 'unknown mode {!r}'.format(config.get('mode'))) from e
        return cls(mode, float(config.get('gamma', 0.0)), config.get('negative_class'))


def score_from_denoiser(d_out: np.ndarray, x_t: np.ndarray, sigma) -> np.ndarray:
    """
    Tweedie: s(x_t, sigma) = (D(x_t; sigma) - x_t) / sigma^2.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma == 0):
        raise ValueError('the denoiser score is undefined at sigma = 0')
    if sigma.ndim == 1:
        sigma = sigma[:, None]
    return (d_out - x_t) / sigma ** 2


def guided_score(s_plus: np.ndarray, s_minus: np.ndarray, gamma: float) -> np.ndarray:
    if np.shape(s_plus) != np.shape(s_minus):
        raise ShapeError('score shapes differ: {} and {}'.format(np.shape(s_plus), np.shape(s_minus)))
    return s_plus + gamma * (s_plus - s_minus)


def model_score_source(model: DenoiserModel) -> ScoreSource:
    def source(x, sigma, class_id):
        return score_from_denoiser(forward(model, x, sigma, class_id), x, sigma)
    return source


def world_score_source(world) -> ScoreSource:
    """
    Analytic scores of a GaussianMixtureWorld; NULL_CLASS selects the marginal.
    """
    def source(x, sigma, class_id):
        return world.score(x, sigma, None if class_id == NULL_CLASS else class_id)
    return source


def _effective_score(source: ScoreSource, guidance: GuidanceSpec, x, sigma, class_id):
    s_plus = source(x, sigma, class_id)
    if guidance.mode is GuidanceMode.NONE:
        return s_plus
    negative = NULL_CLASS if guidance.mode is GuidanceMode.CFG else guidance.negative_class
    return guided_score(s_plus, source(x, sigma, negative), guidance.gamma)


def initial_latents(schedule: NoiseSchedule, n: int, dim: int, rng: Rng) -> np.ndarray:
    return schedule.sigma_max * rng.standard_normal((n, dim))


def sample_ode(
        score_source: ScoreSource, schedule: NoiseSchedule, guidance: GuidanceSpec, class_id: int, n: int, rng: Rng,
        dim: int = 2, latents: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Integrates the probability-flow ODE from sigma_max to 0.

    :param score_source: Callable (x, sigma, class) -> score. NULL_CLASS requests the unconditional channel.
    :param latents: Optional starting points of shape [n, dim], already scaled by sigma_max; drawn from rng otherwise.
    :return: Samples of shape [n, dim].
    """
    x = initial_latents(schedule, n, dim, rng) if latents is None else np.array(latents, dtype=np.float64)
    if x.shape != (n, dim):
        raise ShapeError('latents of shape {} for n={} dim={}'.format(x.shape, n, dim))
    grid = sigma_grid(schedule)
    for step, (sigma, sigma_next) in enumerate(zip(grid[:-1], grid[1:])):
        slope = -sigma * _effective_score(score_source, guidance, x, sigma, class_id)
        x_euler = x + (sigma_next - sigma) * slope
        if sigma_next > 0:
            slope_next = -sigma_next * _effective_score(score_source, guidance, x_euler, sigma_next, class_id)
            x = x + (sigma_next - sigma) * 0.5 * (slope + slope_next)
        else:
            x = x_euler
        if not np.all(np.isfinite(x)):
            raise DivergenceError(step, 'non-finite sampler state')
    return x
