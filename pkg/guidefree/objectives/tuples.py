"""
Contrastive and preference tuples built from a labeled minibatch.

Approach 1 pairs every sample with one mismatched batch position, approach 2 with K of them. Mismatched positions are
drawn uniformly with replacement among batch positions whose label differs, and the K tuples of one sample share its
(sigma, eps) draw.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from guidefree.diffusion.schedule import NoiseSchedule
from guidefree.numerics.rng import Rng
from guidefree.worlds.mixture import LabeledBatch


@dataclass(frozen=True, eq=False)
class NoiseDraw:
    sigma: np.ndarray
    eps: np.ndarray


@dataclass(frozen=True, eq=False)
class ContrastiveTuples:
    x: np.ndarray
    c: np.ndarray
    c_tilde: np.ndarray
    sigma: np.ndarray
    eps: np.ndarray
    origin: np.ndarray

    def __len__(self):
        return len(self.c)

    @classmethod
    def empty(cls, dim: int) -> ContrastiveTuples:
        return cls(np.zeros((0, dim)), np.zeros(0, int), np.zeros(0, int), np.zeros(0), np.zeros((0, dim)),
                   np.zeros(0, int))


@dataclass(frozen=True, eq=False)
class PreferenceTuples:
    x_w: np.ndarray
    x_l: np.ndarray
    c: np.ndarray
    c_l: np.ndarray
    sigma: np.ndarray
    eps: np.ndarray
    origin: np.ndarray

    def __len__(self):
        return len(self.c)


def draw_noise(n: int, dim: int, schedule: NoiseSchedule, rng: Rng) -> NoiseDraw:
    return NoiseDraw(schedule.sample_sigma(n, rng), rng.standard_normal((n, dim)))


def mismatched_positions(labels: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    """
    Array [N, k] of batch positions j with labels[j] != labels[i].
    """
    labels = np.asarray(labels)
    if len(np.unique(labels)) < 2:
        raise ValueError('tuple construction needs at least two distinct labels in the batch')
    if k < 1:
        raise ValueError('K must be >= 1, got {}'.format(k))
    positions = np.empty((len(labels), k), dtype=np.int64)
    for i, label in enumerate(labels):
        candidates = np.flatnonzero(labels != label)
        positions[i] = candidates[rng.integers(len(candidates), size=k)]
    return positions


def _expand(batch: LabeledBatch, approach: int, k: int, schedule: NoiseSchedule, rng: Rng,
            noise: Optional[NoiseDraw]):
    if approach not in (1, 2):
        raise ValueError('approach must be 1 or 2, got {}'.format(approach))
    k = 1 if approach == 1 else k
    if noise is None:
        noise = draw_noise(len(batch), batch.x.shape[1], schedule, rng)
    positions = mismatched_positions(batch.c, k, rng)
    origin = np.repeat(np.arange(len(batch)), k)
    return origin, positions.ravel(), noise


def build_tuples(batch: LabeledBatch, approach: int, k: int, schedule: NoiseSchedule, rng: Rng,
                 noise: Optional[NoiseDraw] = None) -> ContrastiveTuples:
    """
    Contrastive tuples (x, c, c_tilde, sigma, eps): N of them for approach 1, N * K for approach 2.
    """
    origin, mismatch, noise = _expand(batch, approach, k, schedule, rng, noise)
    return ContrastiveTuples(
        batch.x[origin], batch.c[origin], batch.c[mismatch], noise.sigma[origin], noise.eps[origin], origin
    )


def build_preference_tuples(batch: LabeledBatch, approach: int, k: int, schedule: NoiseSchedule, rng: Rng,
                            noise: Optional[NoiseDraw] = None) -> PreferenceTuples:
    """
    Preference tuples (x_w, x_l, c, sigma, eps) where x_l is the sample at a mismatched batch position.
    """
    origin, mismatch, noise = _expand(batch, approach, k, schedule, rng, noise)
    return PreferenceTuples(
        batch.x[origin], batch.x[mismatch], batch.c[origin], batch.c[mismatch], noise.sigma[origin],
        noise.eps[origin], origin
    )
