import numpy as np
import pytest

from guidefree.common.utils import ConfigError, ShapeError
from guidefree.diffusion.schedule import NoiseSchedule, Weighting, corrupt, sigma_grid
from guidefree.numerics.rng import make_rng


def test_corrupt():
    x = np.array([[1.0, 1.0]])
    np.testing.assert_array_equal(corrupt(x, 0.0, np.ones((1, 2))), x)
    np.testing.assert_array_equal(corrupt(x, 3.0, np.zeros((1, 2))), x)
    np.testing.assert_array_equal(corrupt(x, 2.0, np.array([[0.5, -0.5]])), [[2.0, 0.0]])
    np.testing.assert_array_equal(corrupt(np.zeros((2, 1)), np.array([1.0, 2.0]), np.ones((2, 1))), [[1.0], [2.0]])
    with pytest.raises(ShapeError):
        corrupt(x, 1.0, np.zeros((2, 2)))


def test_grid_two_steps():
    np.testing.assert_array_equal(sigma_grid(NoiseSchedule(sigma_min=0.1, sigma_max=5.0, num_steps=2)), [5.0, 0.0])


def test_grid_linear():
    grid = sigma_grid(NoiseSchedule(sigma_min=1.0, sigma_max=3.0, rho=1.0, num_steps=3))
    np.testing.assert_allclose(grid, [3.0, 2.0, 0.0], rtol=1e-15)


def test_grid_karras():
    schedule = NoiseSchedule(sigma_min=0.02, sigma_max=10.0, rho=7.0, num_steps=64)
    grid = sigma_grid(schedule)
    assert len(grid) == 64 and grid[0] == pytest.approx(10.0, rel=1e-14) and grid[-1] == 0.0
    assert np.all(np.diff(grid) < 0)
    i = 10
    expected = (10.0 ** (1 / 7) + i / 63 * (0.02 ** (1 / 7) - 10.0 ** (1 / 7))) ** 7
    assert grid[i] == pytest.approx(expected, rel=1e-14)


def test_log_uniform_training_noise():
    schedule = NoiseSchedule(sigma_min=0.1, sigma_max=10.0)
    sigma = schedule.sample_sigma(100_000, make_rng(0))
    assert sigma.min() >= 0.1 and sigma.max() <= 10.0
    assert np.mean(np.log(sigma)) == pytest.approx(0.0, abs=0.03)


def test_weightings():
    schedule = NoiseSchedule(sigma_data=0.5, weighting=Weighting.EDM, contrastive_weighting=Weighting.INVERSE_VARIANCE)
    sigma = np.array([0.5, 2.0])
    np.testing.assert_allclose(schedule.weight(sigma), (sigma ** 2 + 0.25) / (sigma * 0.5) ** 2)
    np.testing.assert_allclose(schedule.weight(sigma, contrastive=True), 1 / sigma ** 2)
    np.testing.assert_array_equal(NoiseSchedule().weight(sigma, contrastive=True), [1.0, 1.0])


def test_invalid_schedules():
    with pytest.raises(ConfigError):
        NoiseSchedule(sigma_min=0.0)
    with pytest.raises(ConfigError):
        NoiseSchedule(num_steps=1)
    with pytest.raises(ConfigError):
        NoiseSchedule.from_config({'weighting': 'nope'})


def test_config_round_trip():
    schedule = NoiseSchedule(sigma_max=12.0, num_steps=32, weighting=Weighting.CONSTANT)
    assert NoiseSchedule.from_config(schedule.to_config()) == schedule
