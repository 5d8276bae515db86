import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from guidefree.metrics.fidelity import (
    MetricRecord, bayes_accuracy, best_checkpoints, evaluate_samples, frechet_gaussian, grid_range, mean_llr,
    recall_proxy, smoothed, tradeoff_summary, trajectory_report
)
from guidefree.numerics.rng import make_rng
from guidefree.worlds.mixture import LabeledBatch, default_world, isotropic_world


def test_frechet_identical_sets():
    x = make_rng(0).standard_normal((500, 2))
    assert frechet_gaussian(x, x) == pytest.approx(0.0, abs=1e-10)


def test_frechet_scaled_clouds():
    rng = make_rng(1)
    a = rng.standard_normal((100_000, 2))
    b = 2.0 * rng.standard_normal((100_000, 2))
    assert frechet_gaussian(a, b) == pytest.approx(2.0, abs=0.1)


def test_frechet_shifted_clouds():
    rng = make_rng(2)
    a = rng.standard_normal((50_000, 2))
    b = rng.standard_normal((50_000, 2)) + np.array([3.0, 0.0])
    assert frechet_gaussian(a, b) == pytest.approx(9.0, abs=0.1)


def test_frechet_does_not_shrink_under_projection():
    rng = make_rng(3)
    a = rng.standard_normal((2000, 3)) @ np.array([[1.0, 0.3, 0.0], [0.0, 1.2, 0.1], [0.0, 0.0, 0.7]])
    b = rng.standard_normal((2000, 3)) * np.array([0.5, 1.5, 1.0])
    # the 3D value goes through scipy.linalg.sqrtm, the 2D one through the closed form
    assert frechet_gaussian(a, b) >= frechet_gaussian(a[:, :2], b[:, :2]) - 1e-9


def test_frechet_one_dimensional():
    a = np.array([0.0, 1.0, 2.0, 3.0])
    b = 2.0 * a + 1.0
    # means 1.5 and 4.0; variances v and 4v with v = 5/3
    expected = 2.5 ** 2 + (5 / 3) * (1 + 4 - 4)
    assert frechet_gaussian(a, b) == pytest.approx(expected, rel=1e-12)


def test_frechet_flags_degenerate_covariance(caplog):
    line = np.stack([np.linspace(0, 1, 20), np.zeros(20)], axis=1)
    with caplog.at_level('WARNING'):
        value = frechet_gaussian(line, line)
    assert value == pytest.approx(0.0, abs=1e-6)
    assert 'rank-deficient' in caplog.text


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_frechet_is_symmetric(seed):
    rng = make_rng(seed)
    a = rng.standard_normal((50, 2)) * rng.uniform(0.5, 2.0, size=2)
    b = rng.standard_normal((60, 2)) + rng.uniform(-1, 1, size=2)
    assert frechet_gaussian(a, b) == pytest.approx(frechet_gaussian(b, a), rel=1e-9, abs=1e-12)


def test_bayes_accuracy_on_ground_truth_samples():
    world = default_world(radius=2.0, variance=0.25)
    rng = make_rng(4)
    batch = world.sample_labeled(20_000, rng)
    oracle = world.sample_labeled(20_000, make_rng(5))
    accuracy, reference = bayes_accuracy(world, batch), bayes_accuracy(world, oracle)
    se = np.sqrt(reference * (1 - reference) / 20_000)
    assert abs(accuracy - reference) <= 3 * np.sqrt(2) * se


def test_bayes_accuracy_trivial_cases():
    world = default_world()
    dominated = np.tile(world.classes[0][0].mean, (10, 1))
    assert bayes_accuracy(world, LabeledBatch(dominated, np.zeros(10, dtype=int))) == 1.0
    assert bayes_accuracy(world, LabeledBatch(dominated, np.ones(10, dtype=int))) == 0.0


def test_bayes_accuracy_swapped_labels():
    world = default_world()
    batch = world.sample_labeled(5000, make_rng(6))
    swapped = LabeledBatch(batch.x, 1 - batch.c)
    assert bayes_accuracy(world, swapped) == pytest.approx(1.0 - bayes_accuracy(world, batch), abs=1e-12)


def test_bayes_accuracy_ties_go_to_lowest_class():
    world = isotropic_world([[[1.0, 0.0]], [[-1.0, 0.0]]], 0.5)
    origin = np.zeros((4, 2))
    assert bayes_accuracy(world, LabeledBatch(origin, np.zeros(4, dtype=int))) == 1.0


def test_mean_llr_signs():
    world = default_world(radius=1.0, variance=0.5)
    rng = make_rng(7)
    matched = world.sample_labeled(20_000, rng)
    assert mean_llr(world, matched) > 0
    independent = LabeledBatch(matched.x, rng.choice(2, size=20_000, p=world.priors))
    joint = mean_llr(world, independent)
    llr = world.log_class_densities(matched.x)[np.arange(20_000), independent.c] - world.log_density(matched.x, 0.0)
    assert joint <= 3 * llr.std() / np.sqrt(20_000)


def test_mean_llr_single_class_world_is_zero():
    world = isotropic_world([[[0.0, 0.0], [1.0, 1.0]]], 0.3)
    batch = world.sample_labeled(100, make_rng(8))
    assert mean_llr(world, batch) == pytest.approx(0.0, abs=1e-12)


def test_recall_proxy_cases():
    rng = make_rng(9)
    truth = rng.standard_normal((2000, 2))
    assert recall_proxy(truth, truth) == 1.0
    occupied = np.count_nonzero(np.histogramdd(truth, bins=32, range=grid_range(truth))[0])
    assert recall_proxy(truth, truth[:1]) == pytest.approx(1.0 / occupied)


def test_recall_proxy_one_mode():
    world = isotropic_world([[[-3.0, 0.0], [3.0, 0.0]]], 0.2)
    rng = make_rng(10)
    truth = world.sample(20_000, rng, 0)
    one_mode = truth[truth[:, 0] > 0]
    assert recall_proxy(truth, one_mode) == pytest.approx(0.5, abs=0.08)


def test_evaluate_samples_on_truth():
    world = default_world()
    rng = make_rng(11)
    truth = [world.sample(4000, rng, c) for c in range(2)]
    generated = [world.sample(4000, rng, c) for c in range(2)]
    record = evaluate_samples(world, generated, truth, iteration=7, loss=0.5)
    assert record.iteration == 7
    assert record.fd < 0.05
    assert record.bayes_acc > 0.9
    assert record.recall_proxy > 0.5


def test_record_row_round_trip():
    record = MetricRecord(3, 0.25, 1.5, 0.9, 0.4, 0.75, 0.125)
    assert MetricRecord.from_row(record.to_row()) == record


def test_best_checkpoints_marks_all_ties():
    records = [
        MetricRecord(0, float('nan'), 2.0, 0.8, 0.1, 0.9),
        MetricRecord(10, 1.0, 1.0, 0.9, 0.2, 0.9),
        MetricRecord(20, 0.5, 1.0, 0.95, 0.3, 0.8),
    ]
    best = best_checkpoints(records)
    assert best['fd'] == {'value': 1.0, 'iterations': [10, 20]}
    assert best['bayes_acc']['iterations'] == [20]
    assert best['recall_proxy']['iterations'] == [0, 10]


def test_smoothing_and_tradeoff_shape():
    np.testing.assert_allclose(smoothed([1.0, 2.0, 3.0, 4.0]), [1.0, 1.5, 2.0, 3.0])
    records = [MetricRecord(i, 0.0, 1.0, 0.5 + 0.05 * i, 0.1 * i, 1.0 - 0.05 * i) for i in range(8)]
    assert tradeoff_summary(records) == {'bayes_acc_rises': True, 'mean_llr_rises': True, 'recall_falls': True}


def test_missing_pair_distance_reads_back_as_nan():
    record = MetricRecord.from_row(MetricRecord(3, 0.25, 1.5, 0.9, 0.4, 0.75).to_row())
    assert np.isnan(record.pair_distance)
    assert record.recall_proxy == 0.75


def test_trajectory_report_with_interior_frechet_minimum():
    records = [MetricRecord(i, 0.0, (i - 3) ** 2 + 1.0, 0.5 + 0.05 * i, 0.1 * i, 1.0 - 0.05 * i, 0.2 * i)
               for i in reversed(range(8))]
    report = trajectory_report(records)
    assert report['checkpoints'] == 8
    assert report['iterations'] == list(range(8))
    assert report['fd'] == {'first': 10.0, 'last': 17.0, 'best': 1.0}
    assert report['pair_distance']['best'] == pytest.approx(1.4)
    assert report['recall_proxy']['best'] == 1.0
    assert report['fd_interior_minimum'] is True
    assert report['bayes_acc_rises'] and report['mean_llr_rises'] and report['recall_falls']


def test_trajectory_report_edge_cases():
    assert trajectory_report([]) == {'checkpoints': 0, 'iterations': []}
    records = [MetricRecord(i, 0.0, 1.0 - 0.1 * i, 0.5, 0.0, 1.0) for i in range(2)]
    report = trajectory_report(records)
    assert report['fd_interior_minimum'] is None
    assert report['pair_distance'] == {'first': None, 'last': None, 'best': None}
    assert report['fd']['best'] == pytest.approx(0.9)
