"""
Training losses in denoiser form, each returning the scalar loss and its exact parameter gradients.

All losses are means over rows or tuples. The per-row squared error e = ||x - D(x + sigma * eps; sigma, c)||^2 is the
building block; its gradient with respect to D is 2 (D - x).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.special import expit, log_expit

from guidefree.common.utils import NULL_CLASS, ShapeError
from guidefree.diffusion.schedule import NoiseSchedule, corrupt
from guidefree.numerics.network import DenoiserModel, backward, forward, forward_trace
from guidefree.numerics.rng import Rng
from guidefree.objectives.tuples import ContrastiveTuples, NoiseDraw, PreferenceTuples, draw_noise
from guidefree.worlds.mixture import LabeledBatch


@dataclass
class LossResult:
    loss: float
    grads: List[np.ndarray]


def _add(total: List[np.ndarray], grads: List[np.ndarray], scale: float = 1.0):
    for t, g in zip(total, grads):
        t += scale * g


class _Branch:
    """One forward pass over noisy rows, kept for a matching backward pass."""

    def __init__(self, model: DenoiserModel, x: np.ndarray, x_t: np.ndarray, sigma, class_id):
        self.model = model
        self.x = x
        self.x_t = x_t
        self.sigma = sigma
        self.class_id = class_id
        self.trace = forward_trace(model, x_t, sigma, class_id)
        self.residual = self.trace.output - x
        self.sq_error = (self.residual ** 2).sum(axis=1)

    def grads(self, coefficient: np.ndarray) -> List[np.ndarray]:
        """Gradient of sum(coefficient * sq_error)."""
        upstream = 2.0 * coefficient[:, None] * self.residual
        grads, _ = backward(self.model, self.x_t, self.sigma, self.class_id, upstream, trace=self.trace)
        return grads


def _ref_sq_error(ref_model: DenoiserModel, x: np.ndarray, x_t: np.ndarray, sigma, class_id) -> np.ndarray:
    return ((forward(ref_model, x_t, sigma, class_id) - x) ** 2).sum(axis=1)


def _check_reference(model: DenoiserModel, ref_model: DenoiserModel):
    if not model.same_architecture(ref_model):
        raise ShapeError('reference model parameters are not shape-compatible with the trained model')


def apply_label_dropout(labels: np.ndarray, dropout_p: float, rng: Rng) -> np.ndarray:
    if not 0.0 <= dropout_p <= 1.0:
        raise ValueError('dropout probability must lie in [0, 1], got {}'.format(dropout_p))
    drop = rng.random(len(labels)) < dropout_p
    return np.where(drop, NULL_CLASS, labels)


def denoising_loss(model: DenoiserModel, x: np.ndarray, class_id: np.ndarray, noise: NoiseDraw,
                   schedule: NoiseSchedule) -> LossResult:
    """
    mean of w(sigma) * ||x - D(x + sigma * eps; sigma, c)||^2 for pre-drawn noise and (possibly dropped) labels.
    """
    if len(x) == 0:
        return LossResult(0.0, model.zero_grads())
    x_t = corrupt(x, noise.sigma, noise.eps)
    branch = _Branch(model, x, x_t, noise.sigma, class_id)
    weight = schedule.weight(noise.sigma) / len(x)
    return LossResult(float(weight @ branch.sq_error), branch.grads(weight))


def dsm_loss(model: DenoiserModel, batch: LabeledBatch, schedule: NoiseSchedule, dropout_p: float, rng: Rng) \
        -> LossResult:
    """
    Conditional denoising score matching with label dropout onto the null class.
    """
    noise = draw_noise(len(batch), batch.x.shape[1], schedule, rng)
    labels = apply_label_dropout(batch.c, dropout_p, rng)
    return denoising_loss(model, batch.x, labels, noise, schedule)


def mclr_loss(model: DenoiserModel, tuples: ContrastiveTuples, schedule: NoiseSchedule) -> LossResult:
    """
    mean of w(sigma) * (||x - D(x_t; sigma, c)||^2 - ||x - D(x_t; sigma, c_tilde)||^2) with x_t = x + sigma * eps.

    Unbounded below; training length controls how far it is pushed.
    """
    if len(tuples) == 0:
        return LossResult(0.0, model.zero_grads())
    x_t = corrupt(tuples.x, tuples.sigma, tuples.eps)
    matched = _Branch(model, tuples.x, x_t, tuples.sigma, tuples.c)
    mismatched = _Branch(model, tuples.x, x_t, tuples.sigma, tuples.c_tilde)
    weight = schedule.weight(tuples.sigma, contrastive=True) / len(tuples)
    loss = float(weight @ (matched.sq_error - mismatched.sq_error))
    grads = matched.grads(weight)
    _add(grads, mismatched.grads(-weight))
    return LossResult(loss, grads)


def _preference_deltas(model, ref_model, tuples: PreferenceTuples):
    x_t_w = corrupt(tuples.x_w, tuples.sigma, tuples.eps)
    x_t_l = corrupt(tuples.x_l, tuples.sigma, tuples.eps)
    winner = _Branch(model, tuples.x_w, x_t_w, tuples.sigma, tuples.c)
    loser = _Branch(model, tuples.x_l, x_t_l, tuples.sigma, tuples.c)
    delta_w = winner.sq_error - _ref_sq_error(ref_model, tuples.x_w, x_t_w, tuples.sigma, tuples.c)
    delta_l = loser.sq_error - _ref_sq_error(ref_model, tuples.x_l, x_t_l, tuples.sigma, tuples.c)
    return winner, loser, delta_w, delta_l


def elbo_log_ratio(model: DenoiserModel, ref_model: DenoiserModel, x: np.ndarray, class_id, noise: NoiseDraw,
                   schedule: NoiseSchedule) -> np.ndarray:
    """
    Single-draw estimate -w(sigma) * Delta of log p_theta(x|c) / p_ref(x|c), with
    Delta = ||x - D_theta(x_t)||^2 - ||x - D_ref(x_t)||^2.
    """
    _check_reference(model, ref_model)
    x_t = corrupt(x, noise.sigma, noise.eps)
    delta = ((forward(model, x_t, noise.sigma, class_id) - x) ** 2).sum(axis=1) \
        - _ref_sq_error(ref_model, x, x_t, noise.sigma, class_id)
    return -schedule.weight(noise.sigma, contrastive=True) * delta


def ccdpo_loss(model: DenoiserModel, ref_model: DenoiserModel, tuples: PreferenceTuples, schedule: NoiseSchedule,
               beta: float) -> LossResult:
    """
    mean of -log sigmoid(beta * w(sigma) * (Delta_l - Delta_w)). The reference model gets no gradient.
    """
    _check_reference(model, ref_model)
    if len(tuples) == 0:
        return LossResult(0.0, model.zero_grads())
    winner, loser, delta_w, delta_l = _preference_deltas(model, ref_model, tuples)
    scale = beta * schedule.weight(tuples.sigma, contrastive=True)
    margin = scale * (delta_l - delta_w)
    loss = float(np.mean(-log_expit(margin)))
    # d loss / d margin = -sigmoid(-margin) / n
    d_margin = -expit(-margin) / len(tuples)
    grads = winner.grads(-d_margin * scale)
    _add(grads, loser.grads(d_margin * scale))
    return LossResult(loss, grads)


def cca_loss(model: DenoiserModel, ref_model: DenoiserModel, tuples: PreferenceTuples, schedule: NoiseSchedule,
             beta: float, lam: float) -> LossResult:
    """
    mean of -[log sigmoid(-beta w Delta_w) + lam * log sigmoid(beta w Delta_l)]. The reference model gets no gradient.
    """
    _check_reference(model, ref_model)
    if lam < 0:
        raise ValueError('lambda must be >= 0, got {}'.format(lam))
    if len(tuples) == 0:
        return LossResult(0.0, model.zero_grads())
    winner, loser, delta_w, delta_l = _preference_deltas(model, ref_model, tuples)
    scale = beta * schedule.weight(tuples.sigma, contrastive=True)
    loss = float(np.mean(-log_expit(-scale * delta_w) - lam * log_expit(scale * delta_l)))
    n = len(tuples)
    grads = winner.grads(scale * expit(scale * delta_w) / n)
    _add(grads, loser.grads(-lam * scale * expit(-scale * delta_l) / n))
    return LossResult(loss, grads)


def dsm_plus_mclr_loss(model: DenoiserModel, batch: LabeledBatch, noise: NoiseDraw, tuples: ContrastiveTuples,
                       schedule: NoiseSchedule, beta_dsm: float) -> LossResult:
    """
    beta_dsm * DSM (no label dropout) + MCLR.
    """
    if beta_dsm < 0:
        raise ValueError('beta_dsm must be >= 0, got {}'.format(beta_dsm))
    contrastive = mclr_loss(model, tuples, schedule)
    if beta_dsm == 0:
        return contrastive
    denoising = denoising_loss(model, batch.x, batch.c, noise, schedule)
    _add(contrastive.grads, denoising.grads, beta_dsm)
    return LossResult(beta_dsm * denoising.loss + contrastive.loss, contrastive.grads)


def class_blind(model: DenoiserModel, class_id: Optional[int] = 0) -> DenoiserModel:
    """
    Copy of the model whose embedding rows are all equal, so its output ignores the class input.
    """
    blind = model.copy()
    blind.params[-1][:] = blind.params[-1][class_id]
    return blind
