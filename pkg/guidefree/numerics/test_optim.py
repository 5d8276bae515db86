import numpy as np
import pytest

from guidefree.common.utils import ShapeError
from guidefree.numerics.optim import AdamState, adam_step


def test_zero_gradient_keeps_parameters():
    params = [np.array([1.0, -2.0]), np.array([[0.5]])]
    new_params, state = adam_step(AdamState.create(params), params, [np.zeros(2), np.zeros((1, 1))])
    for p, q in zip(params, new_params):
        assert np.array_equal(p, q)
    assert state.step == 1


def test_first_step_moves_by_learning_rate_against_gradient():
    params = [np.array([0.0, 0.0, 0.0])]
    grads = [np.array([3.0, -0.01, 200.0])]
    new_params, _ = adam_step(AdamState.create(params, learning_rate=0.05), params, grads)
    np.testing.assert_allclose(new_params[0], -0.05 * np.sign(grads[0]), rtol=1e-5)


def test_quadratic_loss_decreases_monotonically():
    def loss(w):
        return (w - 3.0) ** 2

    params = [np.array([0.0])]
    state = AdamState.create(params, learning_rate=0.1)
    losses = [loss(params[0][0])]
    for _ in range(3):
        params, state = adam_step(state, params, [2.0 * (params[0] - 3.0)])
        losses.append(loss(params[0][0]))
    # by hand: w ~ 0.1, 0.2, 0.3 while the gradient keeps its sign
    np.testing.assert_allclose(params[0], [0.3], atol=2e-3)
    assert all(a > b for a, b in zip(losses[:-1], losses[1:]))


def test_step_counter_increases_and_inputs_untouched():
    params = [np.ones(3)]
    state = AdamState.create(params)
    for expected in range(1, 4):
        params_before = params[0].copy()
        params, state = adam_step(state, params, [np.ones(3)])
        assert state.step == expected
        assert not np.array_equal(params_before, params[0])


def test_shape_mismatch():
    params = [np.ones(3)]
    with pytest.raises(ShapeError):
        adam_step(AdamState.create(params), params, [np.ones(2)])
