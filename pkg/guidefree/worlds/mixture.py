"""
Class-conditional Gaussian-mixture worlds with analytic noised densities and scores.

Under the variance-exploding corruption x_t = x + sigma * eps every component N(mu, Sigma) becomes
N(mu, Sigma + sigma^2 I), so densities, scores and posteriors stay closed-form at every noise level.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from guidefree.common.utils import NULL_CLASS, ConfigError, as_rows
from guidefree.numerics.rng import Rng

PROBABILITY_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class Component:
    weight: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True, eq=False)
class LabeledBatch:
    x: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if len(self.x) != len(self.c):
            raise ValueError('{} samples but {} labels'.format(len(self.x), len(self.c)))

    def __len__(self):
        return len(self.c)


def _check_probabilities(values: np.ndarray, path: str):
    if np.any(values < 0) or abs(values.sum() - 1.0) > PROBABILITY_TOLERANCE:
        raise ConfigError(path, 'must be a probability vector, got {}'.format(values.tolist()))


class GaussianMixtureWorld:
    def __init__(self, priors: Sequence[float], classes: Sequence[Sequence[Component]]):
        self.priors = np.asarray(priors, dtype=np.float64)
        self.classes: Tuple[Tuple[Component, ...], ...] = tuple(tuple(c) for c in classes)
        if len(self.priors) != len(self.classes):
            raise ConfigError('world.priors', '{} priors for {} classes'.format(len(self.priors), len(self.classes)))
        _check_probabilities(self.priors, 'world.priors')
        self.dim = len(self.classes[0][0].mean)
        for c, components in enumerate(self.classes):
            _check_probabilities(np.array([k.weight for k in components]), 'world.classes[{}].weights'.format(c))
            for i, k in enumerate(components):
                path = 'world.classes[{}].components[{}]'.format(c, i)
                if k.mean.shape != (self.dim,) or k.cov.shape != (self.dim, self.dim):
                    raise ConfigError(path, 'inconsistent dimensions')
                if not np.allclose(k.cov, k.cov.T) or np.any(np.linalg.eigvalsh(k.cov) <= 0):
                    raise ConfigError(path + '.cov', 'must be symmetric positive definite')

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def _components(self, c: Optional[int]) -> List[Tuple[float, Component]]:
        """(log weight, component) pairs for class c, or for the marginal when c is None or NULL_CLASS."""
        if c is None or c == NULL_CLASS:
            return [
                (np.log(self.priors[j]) + np.log(k.weight), k)
                for j, components in enumerate(self.classes) if self.priors[j] > 0
                for k in components
            ]
        if not 0 <= c < self.num_classes:
            raise ValueError('class {} out of range [0, {})'.format(c, self.num_classes))
        return [(np.log(k.weight), k) for k in self.classes[c] if k.weight > 0]

    def _component_log_terms(self, x: np.ndarray, sigma: float, c: Optional[int]):
        x = as_rows(x, self.dim)
        if sigma < 0:
            raise ValueError('sigma must be >= 0, got {}'.format(sigma))
        terms, precision_residuals = [], []
        for log_weight, k in self._components(c):
            cov = k.cov + sigma ** 2 * np.eye(self.dim)
            cholesky = np.linalg.cholesky(cov)
            residual = x - k.mean
            solved = np.linalg.solve(cholesky, residual.T)
            log_det = 2.0 * np.log(np.diag(cholesky)).sum()
            log_pdf = -0.5 * ((solved ** 2).sum(axis=0) + log_det + self.dim * np.log(2 * np.pi))
            terms.append(log_weight + log_pdf)
            precision_residuals.append(np.linalg.solve(cov, residual.T).T)
        return np.stack(terms, axis=1), np.stack(precision_residuals, axis=1)

    def log_density(self, x, sigma: float, c: Optional[int] = None) -> np.ndarray:
        """
        log p_sigma(x | c), or log p_sigma(x) when c is None or NULL_CLASS.
        """
        terms, _ = self._component_log_terms(x, sigma, c)
        return logsumexp(terms, axis=1)

    def log_class_densities(self, x, sigma: float = 0.0) -> np.ndarray:
        """
        Matrix [N, M] of log p_sigma(x | c).
        """
        return np.stack([self.log_density(x, sigma, c) for c in range(self.num_classes)], axis=1)

    def score(self, x, sigma: float, c: Optional[int] = None) -> np.ndarray:
        """
        Analytic score grad_x log p_sigma(x | c); the unconditional score when c is None or NULL_CLASS.
        """
        terms, precision_residuals = self._component_log_terms(x, sigma, c)
        responsibilities = np.exp(terms - logsumexp(terms, axis=1, keepdims=True))
        return -(responsibilities[:, :, None] * precision_residuals).sum(axis=1)

    def cond_score(self, x, sigma: float, c: int) -> np.ndarray:
        return self.score(x, sigma, c)

    def uncond_score(self, x, sigma: float) -> np.ndarray:
        return self.score(x, sigma, None)

    def sample(self, n: int, rng: Rng, c: Optional[int] = None) -> np.ndarray:
        components = self._components(c)
        weights = np.exp([w for w, _ in components])
        counts = rng.multinomial(n, weights / weights.sum())
        order = rng.permutation(n)
        out = np.empty((n, self.dim))
        start = 0
        for count, (_, k) in zip(counts, components):
            out[order[start:start + count]] = rng.multivariate_normal(k.mean, k.cov, size=count, method='cholesky')
            start += count
        return out

    def sample_labeled(self, n: int, rng: Rng) -> LabeledBatch:
        if n < 1:
            raise ValueError('n must be >= 1, got {}'.format(n))
        labels = rng.choice(self.num_classes, size=n, p=self.priors)
        x = np.empty((n, self.dim))
        for c in range(self.num_classes):
            mask = labels == c
            if mask.any():
                x[mask] = self.sample(int(mask.sum()), rng, c)
        return LabeledBatch(x, labels)

    def posterior_sample(self, x_t, sigma: float, n: int, rng: Rng, c: Optional[int] = None) -> np.ndarray:
        """
        n independent draws from the denoising posterior p(x | x_t, c) at a single noisy point.

        The posterior of a Gaussian mixture is again a mixture: a component is picked by its responsibility for x_t,
        then x is drawn from that component's Gaussian posterior.
        """
        if sigma <= 0:
            raise ValueError('posterior needs sigma > 0, got {}'.format(sigma))
        if n < 1:
            raise ValueError('n must be >= 1, got {}'.format(n))
        x_t = as_rows(x_t, self.dim)
        if x_t.shape[0] != 1:
            raise ValueError('posterior_sample takes a single point')
        terms, _ = self._component_log_terms(x_t, sigma, c)
        responsibilities = np.exp(terms[0] - logsumexp(terms[0]))

        components = [k for _, k in self._components(c)]
        picks = rng.choice(len(components), size=n, p=responsibilities / responsibilities.sum())
        out = np.empty((n, self.dim))
        for index, k in enumerate(components):
            mask = picks == index
            if not mask.any():
                continue
            gain = np.linalg.solve(k.cov + sigma ** 2 * np.eye(self.dim), k.cov).T
            mean = k.mean + gain @ (x_t[0] - k.mean)
            cov = k.cov - gain @ k.cov
            cov = 0.5 * (cov + cov.T)
            out[mask] = mean + rng.standard_normal((int(mask.sum()), self.dim)) @ np.linalg.cholesky(cov).T
        return out

    def to_config(self) -> Dict[str, Any]:
        return {
            'kind': 'gaussian_mixture',
            'priors': self.priors.tolist(),
            'classes': [
                [{'weight': k.weight, 'mean': k.mean.tolist(), 'cov': k.cov.tolist()} for k in components]
                for components in self.classes
            ],
        }

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> GaussianMixtureWorld:
        try:
            classes = [
                [Component(float(k['weight']), np.asarray(k['mean'], dtype=np.float64),
                           np.asarray(k['cov'], dtype=np.float64)) for k in components]
                for components in config['classes']
            ]
            return cls(config['priors'], classes)
        except KeyError as e:
            raise ConfigError('world.{}'.format(e.args[0]), 'missing field') from e


def isotropic_world(means_per_class: Sequence[Sequence[Sequence[float]]], variance: float,
                    priors: Optional[Sequence[float]] = None) -> GaussianMixtureWorld:
    """
    Equal-weight components with covariance variance * I.
    """
    classes = []
    for means in means_per_class:
        means = np.asarray(means, dtype=np.float64)
        dim = means.shape[1]
        classes.append([Component(1.0 / len(means), m, variance * np.eye(dim)) for m in means])
    if priors is None:
        priors = np.full(len(classes), 1.0 / len(classes))
    return GaussianMixtureWorld(priors, classes)


def default_world(radius: float = 2.0, variance: float = 0.25) -> GaussianMixtureWorld:
    """
    Two classes with two components each, alternating around a circle: class 0 at 45 and 225 degrees, class 1 at
    135 and 315 degrees.
    """
    def point(degrees):
        return radius * np.array([np.cos(np.radians(degrees)), np.sin(np.radians(degrees))])

    return isotropic_world([[point(45), point(225)], [point(135), point(315)]], variance)


def default_world_1d() -> GaussianMixtureWorld:
    return GaussianMixtureWorld(
        [0.5, 0.5],
        [
            [Component(0.6, np.array([-1.0]), np.array([[0.3]])), Component(0.4, np.array([1.5]), np.array([[0.2]]))],
            [Component(0.5, np.array([1.0]), np.array([[0.25]])), Component(0.5, np.array([-2.0]), np.array([[0.4]]))],
        ]
    )
