import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from guidefree.closedform.simplex import (
    SimplexDist, brute_force_simplex, expected_log_objective, project_floored_simplex
)
from guidefree.numerics.rng import make_rng


@settings(max_examples=200)
@given(arrays(np.float64, st.integers(2, 8), elements=st.floats(-5, 5)), st.floats(0, 0.1))
def test_projection_lands_on_floored_simplex(y, delta_fraction):
    delta = delta_fraction / len(y)
    q = project_floored_simplex(y, delta)[0]
    assert np.all(q >= delta - 1e-15)
    assert abs(q.sum() - 1.0) < 1e-12


@given(arrays(np.float64, 5, elements=st.floats(-3, 3)))
def test_projection_is_idempotent(y):
    q = project_floored_simplex(y, 0.01)
    np.testing.assert_allclose(project_floored_simplex(q, 0.01), q, atol=1e-14)


def test_projection_minimizes_distance():
    y = np.array([0.9, 0.4, -0.3])
    q = project_floored_simplex(y)[0]
    np.testing.assert_allclose(q, [0.75, 0.25, 0.0], atol=1e-15)


def test_brute_force_recovers_kl_optimum():
    target = make_rng(0).dirichlet(np.ones(6))
    q = brute_force_simplex(expected_log_objective(target), 6, 1e-9, rng=make_rng(1))
    assert q.tv(target) < 1e-6


def test_signed_weights_hit_the_floor():
    q = brute_force_simplex(expected_log_objective([1.0, 0.2, -0.2]), 3, 1e-9, rng=make_rng(2))
    np.testing.assert_allclose(q.probs, [5 / 6, 1 / 6, 1e-9], atol=1e-6)


def test_simplex_dist_validates():
    SimplexDist(np.array([0.5, 0.5]))
    for bad in ([0.5, 0.6], [1.2, -0.2]):
        try:
            SimplexDist(np.array(bad))
        except ValueError:
            continue
        raise AssertionError('accepted {}'.format(bad))
