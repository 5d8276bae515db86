from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from guidefree.common.utils import ConfigError, ShapeError
from guidefree.numerics.rng import Rng


class Weighting(enum.Enum):
    CONSTANT = 'constant'
    INVERSE_VARIANCE = 'inverse_variance'
    EDM = 'edm'


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Noise levels for training and sampling under x_t = x + sigma * eps.

    Training draws sigma log-uniformly from [sigma_min, sigma_max]. `weighting` applies to denoising score matching,
    `contrastive_weighting` to the contrastive and preference margins.
    """
    sigma_min: float = 0.02
    sigma_max: float = 80.0
    rho: float = 7.0
    num_steps: int = 64
    sigma_data: float = 1.0
    weighting: Weighting = Weighting.EDM
    contrastive_weighting: Weighting = Weighting.CONSTANT

    def __post_init__(self):
        if not 0 < self.sigma_min < self.sigma_max:
            raise ConfigError('schedule.sigma_min', 'need 0 < sigma_min < sigma_max, got {} and {}'.format(
                self.sigma_min, self.sigma_max))
        if self.num_steps < 2:
            raise ConfigError('schedule.num_steps', 'must be >= 2, got {}'.format(self.num_steps))
        if not self.rho > 0:
            raise ConfigError('schedule.rho', 'must be positive')
        if not self.sigma_data > 0:
            raise ConfigError('schedule.sigma_data', 'must be positive')

    def sample_sigma(self, n: int, rng: Rng) -> np.ndarray:
        return np.exp(rng.uniform(np.log(self.sigma_min), np.log(self.sigma_max), size=n))

    def weight(self, sigma, contrastive: bool = False) -> np.ndarray:
        kind = self.contrastive_weighting if contrastive else self.weighting
        sigma = np.asarray(sigma, dtype=np.float64)
        if kind is Weighting.CONSTANT:
            return np.ones_like(sigma)
        if kind is Weighting.INVERSE_VARIANCE:
            return 1.0 / sigma ** 2
        return (sigma ** 2 + self.sigma_data ** 2) / (sigma * self.sigma_data) ** 2

    def with_steps(self, num_steps: int) -> NoiseSchedule:
        return NoiseSchedule(self.sigma_min, self.sigma_max, self.rho, num_steps, self.sigma_data, self.weighting,
                             self.contrastive_weighting)

    def with_sigma_data(self, sigma_data: float) -> NoiseSchedule:
        return NoiseSchedule(self.sigma_min, self.sigma_max, self.rho, self.num_steps, sigma_data, self.weighting,
                             self.contrastive_weighting)

    def to_config(self) -> Dict[str, Any]:
        return {
            'sigma_min': self.sigma_min, 'sigma_max': self.sigma_max, 'rho': self.rho, 'num_steps': self.num_steps,
            'sigma_data': self.sigma_data, 'weighting': self.weighting.value,
            'contrastive_weighting': self.contrastive_weighting.value,
        }

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> NoiseSchedule:
        config = dict(config)
        for key in ('weighting', 'contrastive_weighting'):
            if key in config:
                try:
                    config[key] = Weighting(config[key])
                except ValueError as e:
                    raise ConfigError('schedule.{}'.format(key), 'unknown weighting {!r}'.format(config[key])) from e
        try:
            return cls(**config)
        except TypeError as e:
            raise ConfigError('schedule', str(e)) from e


def sigma_grid(schedule: NoiseSchedule) -> np.ndarray:
    """
    Sampling grid of length num_steps, strictly decreasing from sigma_max, with the final entry forced to 0.
    """
    n = schedule.num_steps
    i = np.arange(n - 1)
    start = schedule.sigma_max ** (1.0 / schedule.rho)
    end = schedule.sigma_min ** (1.0 / schedule.rho)
    grid = (start + i / (n - 1) * (end - start)) ** schedule.rho
    return np.append(grid, 0.0)


def corrupt(x: np.ndarray, sigma, eps: np.ndarray) -> np.ndarray:
    """
    Variance-exploding corruption x + sigma * eps, sigma scalar or one per row.
    """
    x = np.asarray(x, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x.shape != eps.shape:
        raise ShapeError('x shape {} != eps shape {}'.format(x.shape, eps.shape))
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim == 1:
        if x.ndim != 2 or sigma.shape[0] != x.shape[0]:
            raise ShapeError('{} noise levels for x of shape {}'.format(sigma.shape[0], x.shape))
        sigma = sigma[:, None]
    return x + sigma * eps
