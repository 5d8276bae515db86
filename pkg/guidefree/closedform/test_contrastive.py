import numpy as np
import pytest

from guidefree.closedform.contrastive import (
    ContrastiveKind, brute_force_contrastive, cca_normalizing_lambda, cca_optimum, ccdpo_optimum, dpo_optimal_reward
)
from guidefree.numerics.rng import make_rng
from guidefree.worlds.discrete import DiscreteProblem, canonical_problem, random_problem


def test_gamma_reference_is_corrected_to_data():
    rng = make_rng(0)
    for _ in range(10):
        problem = random_problem(int(rng.integers(3, 8)), 3, rng)
        for beta in (0.5, 1.0, 4.0):
            p_ref = problem.gamma_ref(beta)
            for c in range(problem.num_classes):
                assert ccdpo_optimum(problem, p_ref, c, beta).tv(problem.table[:, c]) < 1e-12


def test_unit_beta_tilts_reference_by_density_ratio():
    problem = canonical_problem()
    q = ccdpo_optimum(problem, problem.table, 0, 1.0)
    expected = problem.table[:, 0] ** 2 / problem.marginal
    np.testing.assert_allclose(q.probs, expected / expected.sum(), rtol=1e-12)


def test_cca_at_normalizing_lambda_matches_ccdpo():
    rng = make_rng(1)
    for _ in range(10):
        problem = random_problem(5, 2, rng)
        p_ref = rng.dirichlet(np.ones(5), size=2).T
        for beta in (0.3, 1.0, 2.5):
            lam = cca_normalizing_lambda(problem, p_ref, 1, beta)
            q, mass = cca_optimum(problem, p_ref, 1, beta, lam)
            assert mass == pytest.approx(1.0, abs=1e-12)
            assert q.tv(ccdpo_optimum(problem, p_ref, 1, beta)) < 1e-12


def test_cca_mass_scales_with_lambda():
    problem = canonical_problem()
    _, mass = cca_optimum(problem, problem.table, 0, 2.0, 4.0)
    _, unit = cca_optimum(problem, problem.table, 0, 2.0, 1.0)
    assert mass == pytest.approx(unit / 2.0, rel=1e-12)


def test_dpo_reward_on_canonical_problem():
    reward = dpo_optimal_reward(canonical_problem(), 0)
    np.testing.assert_allclose(reward.values, np.log([1.75, 1.0, 0.25]), atol=1e-15)
    assert not reward.infinite.any()


def test_dpo_reward_is_infinite_off_support():
    problem = DiscreteProblem(np.array([[1.0, 0.5], [0.0, 0.5]]), np.array([0.5, 0.5]))
    reward = dpo_optimal_reward(problem, 0)
    assert reward.infinite.tolist() == [False, True]
    assert reward.values[1] == -np.inf


@pytest.mark.parametrize('kind', list(ContrastiveKind))
def test_oracle_agrees_with_closed_form(kind):
    rng = make_rng(2)
    for _ in range(4):
        problem = random_problem(4, 2, rng)
        p_ref = rng.dirichlet(np.ones(4), size=2).T
        for beta in (0.5, 2.0):
            q, mass = brute_force_contrastive(problem, p_ref, 0, kind, beta)
            assert q.tv(ccdpo_optimum(problem, p_ref, 0, beta)) < 1e-5
            if kind is ContrastiveKind.CCA:
                assert mass == pytest.approx(1.0, abs=1e-5)


def test_invalid_beta():
    problem = canonical_problem()
    with pytest.raises(ValueError):
        ccdpo_optimum(problem, problem.table, 0, 0.0)
    with pytest.raises(ValueError):
        cca_optimum(problem, problem.table, 0, 1.0, -1.0)
