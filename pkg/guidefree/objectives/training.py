from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from guidefree.common.utils import ConfigError, DivergenceError
from guidefree.diffusion.schedule import NoiseSchedule
from guidefree.numerics.network import DenoiserModel
from guidefree.numerics.optim import AdamState, adam_step
from guidefree.numerics.rng import Rng
from guidefree.objectives import losses
from guidefree.objectives.tuples import build_preference_tuples, build_tuples, draw_noise
from guidefree.worlds.mixture import GaussianMixtureWorld

logger = logging.getLogger(__name__)


class Objective(enum.Enum):
    DSM = 'dsm'
    MCLR = 'mclr'
    DSM_MCLR = 'dsm+mclr'
    CCDPO = 'ccdpo'
    CCA = 'cca'

    @property
    def fine_tuning(self) -> bool:
        return self is not Objective.DSM

    @property
    def needs_reference(self) -> bool:
        return self in (Objective.CCDPO, Objective.CCA)


@dataclass(frozen=True)
class TrainSpec:
    objective: Objective = Objective.DSM
    beta: float = 1.0
    lam: float = 1.0
    beta_dsm: float = 1.0
    approach: int = 2
    k: int = 4
    learning_rate: float = 1e-3
    batch_size: int = 256
    iterations: int = 5000
    dropout_p: float = 0.1
    checkpoint_every: int = 500
    init_checkpoint: Optional[str] = None

    def __post_init__(self):
        if self.approach not in (1, 2):
            raise ConfigError('train.approach', 'must be 1 or 2, got {}'.format(self.approach))
        if self.k < 1:
            raise ConfigError('train.k', 'must be >= 1, got {}'.format(self.k))
        if self.objective in (Objective.CCDPO, Objective.CCA) and not self.beta > 0:
            raise ConfigError('train.beta', 'must be positive, got {}'.format(self.beta))
        if self.objective is Objective.CCA and not self.lam > 0:
            raise ConfigError('train.lam', 'must be positive, got {}'.format(self.lam))
        if self.beta_dsm < 0:
            raise ConfigError('train.beta_dsm', 'must be >= 0')
        if not 0.0 <= self.dropout_p <= 1.0:
            raise ConfigError('train.dropout_p', 'must lie in [0, 1]')
        if self.iterations < 0 or self.batch_size < 2 or self.checkpoint_every < 1:
            raise ConfigError('train', 'need iterations >= 0, batch_size >= 2, checkpoint_every >= 1')
        if self.learning_rate <= 0:
            raise ConfigError('train.learning_rate', 'must be positive')

    def to_config(self) -> Dict[str, Any]:
        config = {k: getattr(self, k) for k in self.__dataclass_fields__}
        config['objective'] = self.objective.value
        return config

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> TrainSpec:
        config = dict(config)
        try:
            config['objective'] = Objective(config.get('objective', 'dsm'))
        except ValueError as e:
            raise ConfigError('train.objective', 'unknown objective {!r}'.format(config.get('objective'))) from e
        unknown = set(config) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError('train.{}'.format(sorted(unknown)[0]), 'unknown field')
        return cls(**config)


CheckpointHook = Callable[[int, DenoiserModel, float], Any]


@dataclass
class TrainResult:
    model: DenoiserModel
    losses: np.ndarray
    records: List[Any] = field(default_factory=list)


def training_step(spec: TrainSpec, model: DenoiserModel, ref_model: Optional[DenoiserModel],
                  world: GaussianMixtureWorld, schedule: NoiseSchedule, rng: Rng) -> losses.LossResult:
    batch = world.sample_labeled(spec.batch_size, rng)
    objective = spec.objective
    if objective is Objective.DSM:
        return losses.dsm_loss(model, batch, schedule, spec.dropout_p, rng)

    noise = draw_noise(len(batch), world.dim, schedule, rng)
    if objective in (Objective.MCLR, Objective.DSM_MCLR):
        tuples = build_tuples(batch, spec.approach, spec.k, schedule, rng, noise=noise)
        if objective is Objective.MCLR:
            return losses.mclr_loss(model, tuples, schedule)
        return losses.dsm_plus_mclr_loss(model, batch, noise, tuples, schedule, spec.beta_dsm)

    tuples = build_preference_tuples(batch, spec.approach, spec.k, schedule, rng, noise=noise)
    if objective is Objective.CCDPO:
        return losses.ccdpo_loss(model, ref_model, tuples, schedule, spec.beta)
    return losses.cca_loss(model, ref_model, tuples, schedule, spec.beta, spec.lam)


def train(spec: TrainSpec, world: GaussianMixtureWorld, schedule: NoiseSchedule, model: DenoiserModel, rng: Rng,
          on_checkpoint: Optional[CheckpointHook] = None, progress: bool = True) -> TrainResult:
    """
    Runs the optimization loop: sample batch, draw noise, build tuples, loss, Adam step.

    `model` is the initial state (the base model for fine-tuning objectives) and is not modified. `on_checkpoint` is
    called with (iteration, model, last loss) at iteration 0, every `checkpoint_every` iterations and at the end; its
    non-None return values are collected into `TrainResult.records`.
    """
    ref_model = model.copy() if spec.objective.needs_reference else None
    model = model.copy()
    state = AdamState.create(model.params, spec.learning_rate)
    history = np.full(spec.iterations, np.nan)
    records = []

    def checkpoint(iteration, loss):
        if on_checkpoint is not None:
            record = on_checkpoint(iteration, model, loss)
            if record is not None:
                records.append(record)

    checkpoint(0, float('nan'))
    logger.info('training %s for %d iterations (batch %d, lr %g)', spec.objective.value, spec.iterations,
                spec.batch_size, spec.learning_rate)
    bar = tqdm(range(1, spec.iterations + 1), disable=not progress, desc=spec.objective.value, leave=False)
    for iteration in bar:
        result = training_step(spec, model, ref_model, world, schedule, rng)
        if not np.isfinite(result.loss) or not all(np.all(np.isfinite(g)) for g in result.grads):
            raise DivergenceError(iteration, 'non-finite {} loss {}'.format(spec.objective.value, result.loss))
        params, state = adam_step(state, model.params, result.grads)
        model = model.with_params(params)
        history[iteration - 1] = result.loss
        if iteration % 50 == 0:
            bar.set_postfix(loss='{:.4g}'.format(result.loss))
        if iteration % spec.checkpoint_every == 0 or iteration == spec.iterations:
            checkpoint(iteration, result.loss)
    return TrainResult(model, history, records)
