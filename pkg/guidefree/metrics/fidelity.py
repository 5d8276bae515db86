"""
Sample-quality metrics for low-dimensional worlds: Frechet distance on raw coordinates, Bayes accuracy of the intended
labels, the mean inter-class log-likelihood ratio and a grid-coverage recall proxy.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from guidefree.common.utils import ShapeError, as_rows
from guidefree.worlds.mixture import GaussianMixtureWorld, LabeledBatch

logger = logging.getLogger(__name__)

COVARIANCE_JITTER = 1e-8
RANK_TOLERANCE = 1e-12
GRID_CELLS = 32
GRID_MARGIN = 0.1


@dataclass
class MetricRecord:
    iteration: int
    loss: float
    fd: float
    bayes_acc: float
    mean_llr: float
    recall_proxy: float
    pair_distance: float = float('nan')

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def to_row(self) -> Dict[str, str]:
        return {k: repr(v) if isinstance(v, float) else str(v) for k, v in asdict(self).items()}

    @classmethod
    def from_row(cls, row: Dict[str, str]) -> MetricRecord:
        return cls(int(row['iteration']), *(float(row[k]) for k in cls.field_names()[1:]))


def _moments(samples: np.ndarray):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    if len(samples) < 2:
        raise ShapeError('need at least 2 samples, got {}'.format(len(samples)))
    return samples.mean(axis=0), np.atleast_2d(np.cov(samples, rowvar=False))


def _regularized(cov: np.ndarray) -> np.ndarray:
    scale = max(float(np.trace(cov)) / len(cov), 1.0)
    if np.linalg.eigvalsh(cov).min() <= RANK_TOLERANCE * scale:
        logger.warning('rank-deficient covariance; adding %g * I', COVARIANCE_JITTER)
        return cov + COVARIANCE_JITTER * np.eye(len(cov))
    return cov


def _trace_sqrt_product(cov_a: np.ndarray, cov_b: np.ndarray) -> float:
    """
    tr sqrt(A^(1/2) B A^(1/2)), i.e. the sum of square roots of the eigenvalues of A B.
    """
    product = cov_a @ cov_b
    dim = len(product)
    if dim == 1:
        return float(np.sqrt(max(product[0, 0], 0.0)))
    if dim == 2:
        det = max(float(np.linalg.det(product)), 0.0)
        return float(np.sqrt(max(np.trace(product) + 2.0 * np.sqrt(det), 0.0)))
    root = linalg.sqrtm(product)
    if np.iscomplexobj(root):
        if not np.allclose(np.diagonal(root).imag, 0, atol=1e-3):
            raise ValueError('imaginary component {}'.format(np.abs(root.imag).max()))
        root = root.real
    return float(np.trace(root))


def frechet_gaussian(samples_a: np.ndarray, samples_b: np.ndarray) -> float:
    """
    Frechet distance between the Gaussians fitted to two sample sets:
    ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^(1/2) S_b S_a^(1/2))^(1/2)).
    """
    mu_a, cov_a = _moments(samples_a)
    mu_b, cov_b = _moments(samples_b)
    if mu_a.shape != mu_b.shape:
        raise ShapeError('dimensions differ: {} and {}'.format(mu_a.shape, mu_b.shape))
    cov_a, cov_b = _regularized(cov_a), _regularized(cov_b)
    diff = mu_a - mu_b
    value = diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * _trace_sqrt_product(cov_a, cov_b)
    return max(float(value), 0.0)


def _log_joint(world: GaussianMixtureWorld, x: np.ndarray) -> np.ndarray:
    """[N, M] of log p(c) + log p(x|c) at sigma = 0."""
    with np.errstate(divide='ignore'):
        return np.log(world.priors)[None, :] + world.log_class_densities(x, 0.0)


def bayes_accuracy(world: GaussianMixtureWorld, batch: LabeledBatch) -> float:
    """
    Fraction of samples whose intended label is the ground-truth posterior argmax; ties go to the lowest class.
    """
    predicted = np.argmax(_log_joint(world, as_rows(batch.x, world.dim)), axis=1)
    return float(np.mean(predicted == batch.c))


def mean_llr(world: GaussianMixtureWorld, batch: LabeledBatch) -> float:
    """
    Mean of log p(x|c) - log p(x) under the world's densities; -inf when some sample has zero marginal density.
    """
    joint = _log_joint(world, as_rows(batch.x, world.dim))
    log_marginal = logsumexp(joint, axis=1)
    if not np.all(np.isfinite(log_marginal)):
        logger.warning('%d samples have zero marginal density', np.count_nonzero(~np.isfinite(log_marginal)))
        return float('-inf')
    labels = np.asarray(batch.c)
    log_conditional = joint[np.arange(len(labels)), labels] - np.log(world.priors[labels])
    return float(np.mean(log_conditional - log_marginal))


def grid_range(truth: np.ndarray, margin: float = GRID_MARGIN):
    """Truth bounding box expanded by `margin` of its extent on each side, as per-axis (low, high) pairs."""
    truth = np.asarray(truth, dtype=np.float64)
    low, high = truth.min(axis=0), truth.max(axis=0)
    pad = margin * np.maximum(high - low, 1e-12)
    return [(float(lo), float(hi)) for lo, hi in zip(low - pad, high + pad)]


def recall_proxy(truth: np.ndarray, generated: np.ndarray, grid_cells: int = GRID_CELLS) -> float:
    """
    Fraction of grid cells occupied by truth samples that also hold at least one generated sample.
    """
    truth = np.asarray(truth, dtype=np.float64)
    truth = truth[:, None] if truth.ndim == 1 else truth
    generated = as_rows(generated, truth.shape[1])
    bounds = grid_range(truth)
    occupied, _ = np.histogramdd(truth, bins=grid_cells, range=bounds)
    covered, _ = np.histogramdd(generated, bins=grid_cells, range=bounds)
    occupied = occupied > 0
    return float(np.count_nonzero(occupied & (covered > 0)) / np.count_nonzero(occupied))


def evaluate_samples(world: GaussianMixtureWorld, generated: Sequence[np.ndarray], truth: Sequence[np.ndarray],
                     iteration: int = 0, loss: float = float('nan')) -> MetricRecord:
    """
    Metrics of per-class generated sample sets against per-class truth samples.

    fd and recall_proxy are computed per class and averaged with the class priors; bayes_acc and mean_llr pool all
    classes.
    """
    if len(generated) != world.num_classes or len(truth) != world.num_classes:
        raise ShapeError('need one sample set per class ({})'.format(world.num_classes))
    x = np.concatenate([as_rows(g, world.dim) for g in generated])
    c = np.concatenate([np.full(len(g), k) for k, g in enumerate(generated)])
    batch = LabeledBatch(x, c)
    priors = np.asarray(world.priors)
    fd = sum(p * frechet_gaussian(g, t) for p, g, t in zip(priors, generated, truth))
    recall = sum(p * recall_proxy(t, g) for p, g, t in zip(priors, generated, truth))
    return MetricRecord(iteration, float(loss), float(fd), bayes_accuracy(world, batch), mean_llr(world, batch),
                        float(recall))


HIGHER_IS_BETTER = {'fd': False, 'bayes_acc': True, 'mean_llr': True, 'recall_proxy': True, 'pair_distance': True}


def best_checkpoints(records: Sequence[MetricRecord]) -> Dict[str, dict]:
    """
    Best value per metric and every checkpoint iteration that attains it.
    """
    report = {}
    for name, higher in HIGHER_IS_BETTER.items():
        values = np.array([getattr(r, name) for r in records], dtype=np.float64)
        finite = np.isfinite(values)
        if not finite.any():
            report[name] = {'value': None, 'iterations': []}
            continue
        best = values[finite].max() if higher else values[finite].min()
        report[name] = {
            'value': float(best),
            'iterations': [r.iteration for r, v in zip(records, values) if v == best],
        }
    return report


def smoothed(values: Sequence[float], window: int = 3) -> np.ndarray:
    """Trailing moving average; the first window - 1 entries average what is available."""
    values = np.asarray(values, dtype=np.float64)
    cumulative = np.concatenate([[0.0], np.cumsum(values)])
    index = np.arange(1, len(values) + 1)
    start = np.maximum(index - window, 0)
    return (cumulative[index] - cumulative[start]) / (index - start)


def tradeoff_summary(records: Sequence[MetricRecord], window: int = 3, tolerance: float = 0.0) -> Dict[str, bool]:
    """
    Shape of a fine-tuning trajectory: fidelity metrics rise over the first half of checkpoints, the recall proxy
    falls over the last half.
    """
    if len(records) < 2:
        return {'bayes_acc_rises': False, 'mean_llr_rises': False, 'recall_falls': False}
    half = (len(records) + 1) // 2

    def monotone(name, part, rising):
        values = smoothed([getattr(r, name) for r in records], window)[part]
        steps = np.diff(values)
        return bool(np.all(steps >= -tolerance) if rising else np.all(steps <= tolerance))

    first, last = slice(0, half), slice(len(records) - half, None)
    return {
        'bayes_acc_rises': monotone('bayes_acc', first, True),
        'mean_llr_rises': monotone('mean_llr', first, True),
        'recall_falls': monotone('recall_proxy', last, False),
    }


def frechet_trajectory_has_interior_minimum(records: Sequence[MetricRecord]) -> Optional[bool]:
    fd = np.array([r.fd for r in records])
    if len(fd) < 3:
        return None
    best = int(np.argmin(fd))
    return 0 < best < len(fd) - 1


def trajectory_report(records: Sequence[MetricRecord], window: int = 3) -> Dict[str, object]:
    """
    First, last and best values of a checkpoint series with its trade-off shape and whether the Frechet distance
    bottoms out strictly inside the series.
    """
    records = sorted(records, key=lambda r: r.iteration)
    report: Dict[str, object] = {'checkpoints': len(records), 'iterations': [r.iteration for r in records]}
    if not records:
        return report
    for name, higher in HIGHER_IS_BETTER.items():
        values = [getattr(r, name) for r in records]
        finite = [v for v in values if np.isfinite(v)]
        report[name] = {
            'first': float(values[0]) if np.isfinite(values[0]) else None,
            'last': float(values[-1]) if np.isfinite(values[-1]) else None,
            'best': float(max(finite) if higher else min(finite)) if finite else None,
        }
    report.update(tradeoff_summary(records, window))
    report['fd_interior_minimum'] = frechet_trajectory_has_interior_minimum(records)
    return report
