from __future__ import annotations

import dataclasses
import itertools
import logging
from typing import List, Optional

import numpy as np

from guidefree.diffusion.sampler import GuidanceSpec, initial_latents, model_score_source, sample_ode
from guidefree.diffusion.schedule import NoiseSchedule
from guidefree.metrics.fidelity import MetricRecord, evaluate_samples
from guidefree.numerics.network import DenoiserModel
from guidefree.numerics.rng import Rng
from guidefree.worlds.mixture import GaussianMixtureWorld

logger = logging.getLogger(__name__)

SAMPLES_PER_CLASS = 4096


def generate_per_class(model: DenoiserModel, schedule: NoiseSchedule, guidance: GuidanceSpec, n: int, rng: Rng,
                       shared_noise: bool = False, latents: Optional[np.ndarray] = None) -> List[np.ndarray]:
    """
    Samples n points for every class. With shared_noise (or explicit latents) every class starts from the same
    latents, so row i of each output comes from the same initial noise.
    """
    source = model_score_source(model)
    if latents is None and shared_noise:
        latents = initial_latents(schedule, n, model.data_dim, rng)
    return [
        sample_ode(source, schedule, guidance, c, n, rng, model.data_dim, latents)
        for c in range(model.num_classes)
    ]


def truth_per_class(world: GaussianMixtureWorld, n: int, rng: Rng) -> List[np.ndarray]:
    return [world.sample(n, rng, c) for c in range(world.num_classes)]


def evaluate_model(model: DenoiserModel, world: GaussianMixtureWorld, schedule: NoiseSchedule, guidance: GuidanceSpec,
                   rng: Rng, truth: List[np.ndarray], n: int = SAMPLES_PER_CLASS, iteration: int = 0,
                   loss: float = float('nan'), latents: Optional[np.ndarray] = None) -> MetricRecord:
    """
    Metrics of samples drawn for every class from one shared set of latents, so the pair distance compares rows
    that started from the same noise.
    """
    generated = generate_per_class(model, schedule, guidance, n, rng, shared_noise=True, latents=latents)
    record = evaluate_samples(world, generated, truth, iteration, loss)
    if len(generated) > 1:
        record = dataclasses.replace(record, pair_distance=mean_pair_distance(generated))
    logger.info('iteration %d: fd %.4g, bayes_acc %.4f, mean_llr %.4g, recall %.3f, pair distance %.3f', iteration,
                record.fd, record.bayes_acc, record.mean_llr, record.recall_proxy, record.pair_distance)
    return record


def mean_pair_distance(samples: List[np.ndarray]) -> float:
    """
    Mean distance between rows generated from the same latent, averaged over every pair of classes.
    """
    if len(samples) < 2:
        raise ValueError('pair distance needs at least two classes')
    return float(np.mean([
        np.linalg.norm(a - b, axis=1).mean() for a, b in itertools.combinations(samples, 2)
    ]))
