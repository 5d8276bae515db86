import dataclasses

import numpy as np
import pytest

from guidefree.closedform.guidance import (
    ScoreChannel, standard_error_threshold, verify_guidance, verify_marginal_score, verify_theorem3
)
from guidefree.common.utils import ConfigError
from guidefree.numerics.rng import make_rng
from guidefree.worlds.mixture import default_world, default_world_1d, isotropic_world

GRID = np.linspace(-3.0, 3.0, 7)


@pytest.mark.parametrize('eta', [0.0, 1.0, 3.0])
@pytest.mark.parametrize('class_id', [0, 1])
def test_classifier_free_guidance_minimizes_weighted_objective(eta, class_id):
    report = verify_theorem3(default_world_1d(), eta, 0.5, GRID, 512, make_rng(0), class_id)
    assert report.passed(z=4.0)
    assert report.ratio_gap < 1e-12


def test_estimate_carries_monte_carlo_error():
    report = verify_theorem3(default_world_1d(), 1.0, 0.5, GRID, 8, make_rng(4))
    assert np.all(report.standard_error > 0)
    assert report.max_deviation > 1e-6
    assert 0.05 < report.max_z


def test_more_draws_shrink_error_and_deviation():
    world = default_world_1d()
    few = verify_theorem3(world, 1.0, 0.5, GRID, 64, make_rng(5))
    many = verify_theorem3(world, 1.0, 0.5, GRID, 16_384, make_rng(5))
    assert many.standard_error.max() < few.standard_error.min()
    assert many.max_deviation < few.max_deviation
    assert many.max_z > 0.05


def test_wrong_target_is_detected():
    world = default_world_1d()
    report = verify_theorem3(world, 1.0, 0.5, GRID, 4096, make_rng(6))
    shifted = dataclasses.replace(report, analytic=report.analytic + 2.0)
    assert report.passed(z=4.0)
    assert not shifted.passed(z=4.0)


def test_single_gaussian_classes():
    world = isotropic_world([[[-1.0]], [[1.0]]], 1.0)
    report = verify_theorem3(world, 1.0, 0.5, GRID, 2048, make_rng(7), class_id=1)
    assert report.passed(z=4.0)
    np.testing.assert_allclose(report.analytic, 2 * world.cond_score(GRID[:, None], 0.5, 1)[:, 0]
                               - world.uncond_score(GRID[:, None], 0.5)[:, 0], rtol=1e-12)


def test_unguided_estimate_is_conditional_score():
    world = default_world_1d()
    report = verify_theorem3(world, 0.0, 1.0, GRID, 64, make_rng(1))
    np.testing.assert_allclose(report.analytic, world.cond_score(GRID[:, None], 1.0, 0)[:, 0], rtol=1e-12)


def test_guidance_between_two_classes():
    world = default_world_1d()
    report = verify_guidance(ScoreChannel(world, 0), ScoreChannel(world, 1), 0.5, 0.8, GRID, 256, make_rng(2))
    assert report.passed(z=4.0)
    assert report.ratio_gap < 1e-12


def test_marginal_score_is_posterior_mean():
    deviations, errors = verify_marginal_score(default_world_1d(), 0.7, GRID, 256, make_rng(3))
    assert np.all(errors > 0)
    assert np.all(deviations < standard_error_threshold(len(GRID), 256, 4.0) * errors)
    assert deviations.max() > 1e-6


def test_standard_error_threshold():
    assert standard_error_threshold(1, 10 ** 9) == pytest.approx(3.0, abs=1e-4)
    assert standard_error_threshold(21, 100_000) > standard_error_threshold(1, 100_000)
    assert standard_error_threshold(1, 8) > standard_error_threshold(1, 8000)
    with pytest.raises(ValueError):
        standard_error_threshold(0, 10)


def test_direct_density_matches_log_density():
    channel = ScoreChannel(default_world_1d(), None)
    for x_t in GRID:
        assert channel.direct_density(x_t, 0.4) == pytest.approx(np.exp(channel.log_density(x_t, 0.4)), rel=1e-12)


def test_rejects_planar_world():
    world = default_world()
    with pytest.raises(ConfigError):
        verify_theorem3(world, 1.0, 0.5, GRID, 16, make_rng(0))
