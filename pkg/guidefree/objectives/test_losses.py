import numpy as np
import pytest

from guidefree.common.utils import NULL_CLASS, ShapeError
from guidefree.diffusion.schedule import NoiseSchedule, Weighting
from guidefree.numerics.gradcheck import grad_check
from guidefree.numerics.network import init_model
from guidefree.numerics.rng import make_rng
from guidefree.objectives.losses import (
    apply_label_dropout, cca_loss, ccdpo_loss, class_blind, denoising_loss, dsm_loss, dsm_plus_mclr_loss,
    elbo_log_ratio, mclr_loss
)
from guidefree.objectives.tuples import (
    ContrastiveTuples, NoiseDraw, build_preference_tuples, build_tuples, draw_noise
)
from guidefree.worlds.mixture import default_world, isotropic_world

PROBES = 60


def gradcheck_schedule():
    # moderate noise keeps the loss O(1) so finite differences stay well conditioned
    return NoiseSchedule(sigma_min=0.2, sigma_max=2.0, weighting=Weighting.CONSTANT,
                         contrastive_weighting=Weighting.CONSTANT)


def setup(seed=0, n=16):
    rng = make_rng(seed)
    model = init_model(2, 2, rng, hidden_layers=2, width=16, embedding_dim=4)
    batch = default_world().sample_labeled(n, rng)
    if len(np.unique(batch.c)) < 2:
        batch.c[0] = 1 - batch.c[0]
    return model, batch, rng


def perturbed(model, rng, scale=0.05):
    return model.with_params([p + scale * rng.standard_normal(p.shape) for p in model.params])


def test_dsm_gradient():
    model, batch, rng = setup()
    schedule = gradcheck_schedule()
    noise = draw_noise(len(batch), 2, schedule, rng)
    labels = apply_label_dropout(batch.c, 0.3, rng)
    assert grad_check(lambda m: (lambda r: (r.loss, r.grads))(denoising_loss(m, batch.x, labels, noise, schedule)),
                      model, PROBES, rng) < 1e-4


def test_mclr_gradient():
    model, batch, rng = setup(1)
    schedule = gradcheck_schedule()
    tuples = build_tuples(batch, 1, 1, schedule, rng)
    assert len(tuples) == 16

    def loss_fn(m):
        r = mclr_loss(m, tuples, schedule)
        return r.loss, r.grads

    assert grad_check(loss_fn, model, PROBES, rng) < 1e-4


def test_ccdpo_gradient():
    model, batch, rng = setup(2)
    schedule = gradcheck_schedule()
    ref = perturbed(model, rng)
    tuples = build_preference_tuples(batch, 2, 2, schedule, rng)

    def loss_fn(m):
        r = ccdpo_loss(m, ref, tuples, schedule, beta=0.7)
        return r.loss, r.grads

    assert grad_check(loss_fn, model, PROBES, rng) < 1e-4


def test_cca_gradient():
    model, batch, rng = setup(3)
    schedule = gradcheck_schedule()
    ref = perturbed(model, rng)
    tuples = build_preference_tuples(batch, 1, 1, schedule, rng)

    def loss_fn(m):
        r = cca_loss(m, ref, tuples, schedule, beta=0.7, lam=1.7)
        return r.loss, r.grads

    assert grad_check(loss_fn, model, PROBES, rng) < 1e-4


def test_dsm_plus_mclr_gradient():
    model, batch, rng = setup(4)
    schedule = gradcheck_schedule()
    noise = draw_noise(len(batch), 2, schedule, rng)
    tuples = build_tuples(batch, 2, 2, schedule, rng, noise=noise)

    def loss_fn(m):
        r = dsm_plus_mclr_loss(m, batch, noise, tuples, schedule, beta_dsm=0.5)
        return r.loss, r.grads

    assert grad_check(loss_fn, model, PROBES, rng) < 1e-4


def test_dsm_of_ideal_denoiser_matches_posterior_trace():
    # N(mu, I): the posterior covariance at sigma is sigma^2 / (1 + sigma^2) I
    mu = np.array([0.5, -0.5])
    sigma = 0.8
    world = isotropic_world([[mu]], 1.0)
    rng = make_rng(5)
    x = world.sample(50_000, rng, 0)
    x_t = x + sigma * rng.standard_normal(x.shape)
    posterior_mean = (mu * sigma ** 2 + x_t) / (1 + sigma ** 2)
    errors = ((x - posterior_mean) ** 2).sum(axis=1)
    expected = 2 * sigma ** 2 / (1 + sigma ** 2)
    assert abs(errors.mean() - expected) < 3 * errors.std() / np.sqrt(len(errors))


def test_full_dropout_leaves_class_rows_untouched():
    model, batch, rng = setup(6)
    result = dsm_loss(model, batch, NoiseSchedule(), 1.0, rng)
    embedding_grad = result.grads[-1]
    assert not np.any(embedding_grad[:model.num_classes])
    assert np.any(embedding_grad[model.num_classes])


def test_label_dropout_probability():
    labels = apply_label_dropout(np.zeros(100_000, dtype=int), 0.1, make_rng(7))
    assert np.mean(labels == NULL_CLASS) == pytest.approx(0.1, abs=0.005)


def test_duplicated_rows_leave_means_unchanged():
    model, batch, rng = setup(8)
    schedule = NoiseSchedule()
    noise = draw_noise(len(batch), 2, schedule, rng)
    single = denoising_loss(model, batch.x, batch.c, noise, schedule)
    doubled = denoising_loss(model, np.concatenate([batch.x, batch.x]), np.concatenate([batch.c, batch.c]),
                             NoiseDraw(np.tile(noise.sigma, 2), np.concatenate([noise.eps, noise.eps])), schedule)
    assert doubled.loss == pytest.approx(single.loss, rel=1e-12)


def test_mclr_vanishes_for_matching_labels():
    model, batch, rng = setup(9)
    tuples = build_tuples(batch, 1, 1, NoiseSchedule(), rng)
    same = ContrastiveTuples(tuples.x, tuples.c, tuples.c, tuples.sigma, tuples.eps, tuples.origin)
    result = mclr_loss(model, same, NoiseSchedule())
    assert result.loss == 0.0
    assert all(np.allclose(g, 0.0, atol=1e-12) for g in result.grads)


def test_mclr_vanishes_for_class_blind_model():
    model, batch, rng = setup(10)
    tuples = build_tuples(batch, 2, 3, NoiseSchedule(), rng)
    assert mclr_loss(class_blind(model), tuples, NoiseSchedule()).loss == 0.0


def test_mclr_is_permutation_invariant():
    model, batch, rng = setup(11)
    schedule = NoiseSchedule()
    tuples = build_tuples(batch, 2, 2, schedule, rng)
    order = make_rng(12).permutation(len(tuples))
    shuffled = ContrastiveTuples(tuples.x[order], tuples.c[order], tuples.c_tilde[order], tuples.sigma[order],
                                 tuples.eps[order], tuples.origin[order])
    assert mclr_loss(model, shuffled, schedule).loss == pytest.approx(mclr_loss(model, tuples, schedule).loss,
                                                                      rel=1e-12)


def test_ccdpo_at_reference_is_log_two():
    model, batch, rng = setup(13)
    schedule = NoiseSchedule()
    tuples = build_preference_tuples(batch, 1, 1, schedule, rng)
    assert ccdpo_loss(model, model.copy(), tuples, schedule, beta=2.0).loss == pytest.approx(np.log(2), rel=1e-15)


def test_ccdpo_with_zero_beta():
    model, batch, rng = setup(14)
    schedule = NoiseSchedule()
    tuples = build_preference_tuples(batch, 1, 1, schedule, rng)
    result = ccdpo_loss(model, perturbed(model, rng), tuples, schedule, beta=0.0)
    assert result.loss == pytest.approx(np.log(2), rel=1e-15)
    assert all(not np.any(g) for g in result.grads)


def test_cca_at_reference():
    model, batch, rng = setup(15)
    schedule = NoiseSchedule()
    tuples = build_preference_tuples(batch, 1, 1, schedule, rng)
    assert cca_loss(model, model.copy(), tuples, schedule, 1.0, 0.6).loss == pytest.approx(1.6 * np.log(2), rel=1e-14)


def test_cca_without_lambda_ignores_losers():
    model, batch, rng = setup(16)
    schedule = NoiseSchedule()
    ref = perturbed(model, rng)
    tuples = build_preference_tuples(batch, 1, 1, schedule, rng)
    moved = type(tuples)(tuples.x_w, tuples.x_l + 3.0, tuples.c, tuples.c_l, tuples.sigma, tuples.eps, tuples.origin)
    assert cca_loss(model, ref, tuples, schedule, 1.0, 0.0).loss == cca_loss(model, ref, moved, schedule, 1.0, 0.0).loss


def test_reference_never_changes_and_must_match():
    model, batch, rng = setup(17)
    schedule = NoiseSchedule()
    ref = perturbed(model, rng)
    before = [p.copy() for p in ref.params]
    tuples = build_preference_tuples(batch, 1, 1, schedule, rng)
    result = ccdpo_loss(model, ref, tuples, schedule, 1.0)
    assert len(result.grads) == len(model.params)
    assert all(np.array_equal(a, b) for a, b in zip(before, ref.params))
    other = init_model(2, 2, rng, hidden_layers=1, width=8)
    with pytest.raises(ShapeError):
        cca_loss(model, other, tuples, schedule, 1.0, 1.0)


def test_dsm_plus_mclr_reductions():
    model, batch, rng = setup(18)
    schedule = NoiseSchedule()
    noise = draw_noise(len(batch), 2, schedule, rng)
    tuples = build_tuples(batch, 1, 1, schedule, rng, noise=noise)
    mclr = mclr_loss(model, tuples, schedule).loss
    dsm = denoising_loss(model, batch.x, batch.c, noise, schedule).loss
    assert dsm_plus_mclr_loss(model, batch, noise, tuples, schedule, 0.0).loss == mclr
    empty = ContrastiveTuples.empty(2)
    assert dsm_plus_mclr_loss(model, batch, noise, empty, schedule, 2.5).loss == pytest.approx(2.5 * dsm, rel=1e-14)
    combined = [dsm_plus_mclr_loss(model, batch, noise, tuples, schedule, b).loss for b in (0.3, 1.1, 1.4)]
    assert combined[0] + combined[1] - combined[2] == pytest.approx(mclr, rel=1e-9, abs=1e-9)


def test_elbo_log_ratio_is_zero_at_reference():
    model, batch, rng = setup(19)
    noise = draw_noise(len(batch), 2, NoiseSchedule(), rng)
    assert not np.any(elbo_log_ratio(model, model.copy(), batch.x, batch.c, noise, NoiseSchedule()))
