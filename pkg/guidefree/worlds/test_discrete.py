import numpy as np
import pytest

from guidefree.common.utils import ConfigError
from guidefree.numerics.rng import make_rng
from guidefree.worlds.discrete import DiscreteProblem, canonical_problem, random_problem


def test_uniform_table():
    problem = DiscreteProblem(np.full((4, 3), 0.25), np.full(3, 1 / 3))
    for x in range(4):
        for c in range(3):
            assert problem.densities(x, c) == pytest.approx((0.25, 0.25), abs=1e-15)


def test_one_hot_columns():
    problem = DiscreteProblem(np.eye(3), np.full(3, 1 / 3))
    assert {problem.densities(x, c)[0] for x in range(3) for c in range(3)} == {0.0, 1.0}


def test_canonical_marginal():
    np.testing.assert_allclose(canonical_problem().marginal, [0.4, 0.2, 0.4], atol=1e-15)


def test_densities_out_of_range():
    with pytest.raises(IndexError):
        canonical_problem().densities(3, 0)


def test_mixture_ref():
    problem = canonical_problem()
    np.testing.assert_allclose(problem.mixture_ref(0.0), problem.table)
    np.testing.assert_allclose(problem.mixture_ref(1.0), np.tile(problem.marginal[:, None], (1, 2)))
    np.testing.assert_allclose(problem.mixture_ref(0.3)[:, 0], [0.61, 0.2, 0.19], atol=1e-15)
    with pytest.raises(ValueError):
        problem.mixture_ref(1.5)


def test_gamma_ref():
    problem = canonical_problem()
    np.testing.assert_allclose(problem.gamma_ref(1.0), np.tile(problem.marginal[:, None], (1, 2)), atol=1e-15)
    np.testing.assert_allclose(problem.gamma_ref(1e6), problem.table, atol=1e-4)
    expected = np.sqrt([0.7 * 0.4, 0.2 * 0.2, 0.1 * 0.4])
    np.testing.assert_allclose(problem.gamma_ref(2.0)[:, 0], expected / expected.sum(), rtol=1e-13)


@pytest.mark.parametrize('beta, expected', [
    (1.0, [[0.5, 0.5], [0.5, 0.5], [0.0, 0.0]]),
    (2.0, [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]),
    (0.5, [[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]]),
])
def test_gamma_ref_of_one_hot_classes(beta, expected):
    problem = DiscreteProblem(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]), np.array([0.5, 0.5]))
    np.testing.assert_allclose(problem.gamma_ref(beta), expected, atol=1e-15)


def test_gamma_ref_below_one_spreads_over_missing_support_by_marginal():
    problem = DiscreteProblem(np.array([[1.0, 0.0], [0.0, 0.5], [0.0, 0.5]]), np.array([0.5, 0.5]))
    ref = problem.gamma_ref(0.5)
    np.testing.assert_allclose(ref[:, 0], [0.0, 0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(ref[:, 1], [1.0, 0.0, 0.0], atol=1e-15)


@pytest.mark.parametrize('seed', range(10))
def test_random_problems_are_consistent(seed):
    rng = make_rng(seed)
    problem = random_problem(int(rng.integers(3, 9)), int(rng.integers(2, 4)), rng)
    np.testing.assert_allclose(problem.table.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(problem.marginal, (problem.table * problem.priors).sum(axis=1), atol=1e-12)
    for ref in (problem.mixture_ref(0.4), problem.gamma_ref(0.7)):
        assert np.all(ref >= 0)
        np.testing.assert_allclose(ref.sum(axis=0), 1.0, atol=1e-12)


def test_invalid_table():
    with pytest.raises(ConfigError):
        DiscreteProblem(np.array([[0.5, 0.5], [0.6, 0.5]]), np.array([0.5, 0.5]))


def test_config_round_trip():
    problem = canonical_problem().with_reference(canonical_problem().mixture_ref(0.2))
    restored = DiscreteProblem.from_config(problem.to_config())
    assert restored.to_config() == problem.to_config()
