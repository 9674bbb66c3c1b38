# standard library imports
import logging

# third-party imports
import numpy as np
import pytest
from scipy.stats import chisquare

# local imports
from povsim.custom.custom_models import ForestModel, LogisticModel, TreeModel
from povsim.errors import ConfigError, EmptyPool, MissingGroupMetric, ValidationError
from povsim.metrics import ConfusionCounts, GroupMetrics, GroupStat, group_metrics
from povsim.strategies import (AcquisitionContext, GroupStrategy, MarginStrategy, QueryByCommitteeStrategy, StrategyKind, UniformStrategy,
                               WeightVector, committee_variance, group_scores, group_weights, make_strategy, margin_scores,
                               margin_weights, qbc_weights, uniform_weights, weighted_sample_without_replacement)

from conftest import make_dataset


def stump(t, scale=1.0, shift=0.0):
    """Splits at x <= 0.5: the left leaf predicts t + 1, the right leaf 2."""
    return TreeModel(feature=np.array([0, -1, -1]),
                     threshold=np.array([0.5, np.nan, np.nan]),
                     left=np.array([1, -1, -1]),
                     right=np.array([2, -1, -1]),
                     value=np.array([0.0, t + 1.0, 2.0]) * scale + shift,
                     n_features=1)


def committee(**kwargs):
    return ForestModel(trees=tuple(stump(t, **kwargs) for t in range(3)), trained_on=np.arange(2))


def two_point_pool():
    return make_dataset([[0.0], [1.0]], [1.0, 1.0])


def group_pool(sizes=(1, 1), labels=("a", "b")):
    group_index = np.repeat(np.arange(len(sizes)), sizes)
    return make_dataset(np.zeros(len(group_index)), np.ones(len(group_index)), group_index=group_index, labels=list(labels))


def metrics_of(**per_group):
    stats = tuple(GroupStat(label=label, n=10, counts=ConfusionCounts(), **{"accuracy": 1.0, "mse": 0.0, "dp": 0.0, **values})
                  for label, values in per_group.items())
    return GroupMetrics(stats=stats)


# UNIFORM: ==========================================


def test_uniform_weights_examples():
    np.testing.assert_array_equal(uniform_weights([4, 5, 6, 7]).weights, [0.25] * 4)
    np.testing.assert_array_equal(uniform_weights([3]).weights, [1.0])
    wv = uniform_weights(np.arange(3446))
    assert np.all(wv.weights == 1.0 / 3446)
    assert wv.weights.sum() == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(EmptyPool):
        uniform_weights([])


def test_weight_vector_validation():
    with pytest.raises(ValidationError):
        WeightVector(ids=[0, 1], weights=[0.5, 0.6])
    with pytest.raises(ValidationError):
        WeightVector(ids=[0, 1], weights=[1.5, -0.5])
    with pytest.raises(ValidationError):
        WeightVector(ids=[0, 1, 2], weights=[0.5, 0.5])
    assert WeightVector.from_raw([1, 2], [0.0, 0.0]).as_dict() == {1: 0.5, 2: 0.5}
    with pytest.raises(EmptyPool):
        WeightVector.from_raw([], [])


# QUERY BY COMMITTEE: ===============================


def test_qbc_population_variance():
    pool = two_point_pool()
    raw = committee_variance(np.array([[1.0, 2.0], [2.0, 2.0], [3.0, 2.0]]))
    np.testing.assert_allclose(raw, [2.0 / 3.0, 0.0], rtol=1e-12)
    wv = qbc_weights(committee(), pool)
    np.testing.assert_array_equal(wv.ids, [0, 1])
    np.testing.assert_array_equal(wv.weights, [1.0, 0.0])


def test_qbc_identical_trees_fall_back_to_uniform():
    model = ForestModel(trees=(stump(0), ) * 4, trained_on=np.arange(2))
    np.testing.assert_array_equal(qbc_weights(model, two_point_pool()).weights, [0.5, 0.5])


def test_qbc_shift_and_scale_invariance():
    pool = make_dataset(np.linspace(-1.0, 2.0, 7), np.ones(7))
    base = qbc_weights(committee(), pool).weights
    np.testing.assert_allclose(qbc_weights(committee(shift=10.0), pool).weights, base, atol=1e-9)
    np.testing.assert_allclose(qbc_weights(committee(scale=3.0), pool).weights, base, atol=1e-12)


def test_qbc_empty_pool():
    with pytest.raises(EmptyPool):
        qbc_weights(committee(), two_point_pool().subset([]))


# MARGIN: ===========================================


def test_margin_scores_examples():
    np.testing.assert_array_equal(margin_scores([0.5, 1.0, 0.75]), [1.0, 1e-6, 0.5])
    np.testing.assert_array_equal(margin_scores([0.0]), [1e-6])


def test_margin_weights():
    pool = make_dataset(np.random.default_rng(0).normal(size=(6, 2)), np.ones(6))
    flat = LogisticModel(coef=np.zeros(2), intercept=0.0, mean=np.zeros(2), scale=np.ones(2))
    np.testing.assert_allclose(margin_weights(flat, pool).weights, np.full(6, 1 / 6), rtol=1e-12)

    steep = LogisticModel(coef=np.array([1.0, 0.0]), intercept=0.0, mean=np.zeros(2), scale=np.ones(2))
    pool = make_dataset([[0.0, 0.0], [5.0, 0.0], [-0.2, 1.0]], np.ones(3))
    w = margin_weights(steep, pool).weights
    assert w[0] > w[2] > w[1]


# GROUP WEIGHTS: ====================================


def test_accuracy_weighted_example():
    wv = group_weights(StrategyKind.ACCURACY, metrics_of(a=dict(accuracy=0.9), b=dict(accuracy=0.6)), group_pool())
    np.testing.assert_allclose(wv.weights, [0.2, 0.8], rtol=1e-12)


def test_mse_weighted_degenerate_example():
    wv = group_weights(StrategyKind.MSE, metrics_of(a=dict(mse=0.0), b=dict(mse=0.0)), group_pool())
    np.testing.assert_array_equal(wv.weights, [0.5, 0.5])


def test_disparity_weighted_example():
    wv = group_weights(StrategyKind.DISPARITY, metrics_of(a=dict(dp=0.1), b=dict(dp=-0.2)), group_pool())
    np.testing.assert_allclose(wv.weights, [0.9 / 2.1, 1.2 / 2.1], rtol=1e-12)


def test_group_members_share_a_weight():
    pool = group_pool(sizes=(3, 5))
    wv = group_weights(StrategyKind.MSE, metrics_of(a=dict(mse=0.4), b=dict(mse=1.3)), pool)
    assert len(set(wv.weights[:3])) == 1
    assert len(set(wv.weights[3:])) == 1
    assert wv.weights[0] / wv.weights[3] == pytest.approx(0.4 / 1.3)


def test_group_weights_missing_group():
    with pytest.raises(MissingGroupMetric):
        group_weights(StrategyKind.ACCURACY, metrics_of(a=dict(accuracy=0.5)), group_pool())
    with pytest.raises(ConfigError):
        group_weights(StrategyKind.QBC, metrics_of(a=dict(), b=dict()), group_pool())


def test_group_strategy_falls_back_to_uniform(caplog):
    strategy = make_strategy("accuracy")
    context = AcquisitionContext(group_metrics=metrics_of(a=dict(accuracy=0.5)))
    with caplog.at_level(logging.WARNING):
        wv = strategy.weights(group_pool(), context)
    np.testing.assert_array_equal(wv.weights, [0.5, 0.5])
    assert "'b'" in caplog.text


def random_survey(rng, n_min, n_max, n_groups):
    """Random households with every group present; returns the data and noisy log-consumption predictions."""
    n = int(rng.integers(n_min, n_max))
    group_index = np.concatenate([np.arange(n_groups), rng.integers(0, n_groups, size=n - n_groups)])
    consumption = np.exp(rng.normal(np.log(1.9), 0.6, size=n))
    ds = make_dataset(rng.normal(size=(n, 2)), consumption, group_index=group_index, labels=[f"g{i}" for i in range(n_groups)])
    return ds, ds.log_consumption + rng.normal(0.0, rng.uniform(0.05, 1.0), size=n)


def group_weights_by_hand(kind, holdout, preds, pool, line=1.9):
    """Per-point 1 - A_g, MSE_g or 1 - DP_g, counted point by point on the holdout, then normalized."""
    raw = []
    for g in pool.group_index:
        tp = tn = fp = fn = 0
        squared = []
        for y, p, h in zip(holdout.consumption, preds, holdout.group_index):
            if h != g:
                continue
            poor, predicted_poor = y < line, p < np.log(line)
            tp += poor and predicted_poor
            tn += not poor and not predicted_poor
            fp += not poor and predicted_poor
            fn += poor and not predicted_poor
            squared.append((np.log(y) - p) ** 2)
        n_g = tp + tn + fp + fn
        raw.append({StrategyKind.ACCURACY: 1.0 - (tp + tn) / n_g,
                    StrategyKind.MSE: sum(squared) / n_g,
                    StrategyKind.DISPARITY: 1.0 - ((tp + fp) - (tp + fn)) / n_g}[kind])
    raw = np.array(raw)
    return np.full(len(raw), 1.0 / len(raw)) if raw.sum() == 0 else raw / raw.sum()


@pytest.mark.parametrize("kind", [StrategyKind.ACCURACY, StrategyKind.MSE, StrategyKind.DISPARITY])
def test_group_weights_match_hand_computation(kind):
    rng = np.random.default_rng(17)
    for _ in range(120):
        n_groups = int(rng.integers(1, 5))
        holdout, preds = random_survey(rng, n_groups, 40, n_groups)
        pool, _ = random_survey(rng, n_groups, 30, n_groups)
        wv = group_weights(kind, group_metrics(holdout, preds), pool)
        np.testing.assert_array_equal(wv.ids, pool.ids)
        np.testing.assert_allclose(wv.weights, group_weights_by_hand(kind, holdout, preds, pool), rtol=0, atol=1e-12)


@pytest.mark.parametrize("kind", [StrategyKind.ACCURACY, StrategyKind.MSE, StrategyKind.DISPARITY])
@pytest.mark.parametrize("c", [1e-3, 0.5, 7.0, 1e6])
def test_group_weights_scale_invariance(kind, c):
    rng = np.random.default_rng(23)
    holdout, preds = random_survey(rng, 30, 60, 3)
    pool, _ = random_survey(rng, 10, 20, 3)
    gm = group_metrics(holdout, preds)
    wv = group_weights(kind, gm, pool)
    scores = group_scores(kind, gm)
    raw = np.array([scores[label] for label in pool.group_labels])
    np.testing.assert_allclose(WeightVector.from_raw(pool.ids, c * raw).weights, wv.weights, rtol=1e-12, atol=0)


def test_mse_weights_ignore_a_common_scale_of_the_group_errors():
    pool = group_pool(sizes=(2, 3, 1), labels=("a", "b", "c"))
    base = group_weights(StrategyKind.MSE, metrics_of(a=dict(mse=0.2), b=dict(mse=0.7), c=dict(mse=1.1)), pool)
    for c in (1e-4, 3.0, 250.0):
        scaled = group_weights(StrategyKind.MSE, metrics_of(a=dict(mse=0.2 * c), b=dict(mse=0.7 * c), c=dict(mse=1.1 * c)), pool)
        np.testing.assert_allclose(scaled.weights, base.weights, rtol=1e-12, atol=0)


# SAMPLER: ==========================================


def test_sampler_point_mass():
    wv = WeightVector(ids=[10, 11, 12], weights=[1.0, 0.0, 0.0])
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert list(weighted_sample_without_replacement(wv, 1, rng)) == [10]


def test_sampler_exhaustive_draw():
    wv = WeightVector(ids=[0, 1], weights=[0.75, 0.25])
    assert sorted(weighted_sample_without_replacement(wv, 2, np.random.default_rng(1))) == [0, 1]


def test_sampler_frequencies_are_uniform():
    wv = uniform_weights(np.arange(10))
    rng = np.random.default_rng(2)
    draws = np.array([weighted_sample_without_replacement(wv, 1, rng)[0] for _ in range(100_000)])
    assert chisquare(np.bincount(draws, minlength=10)).pvalue > 0.001


def test_sampler_frequencies_follow_weights():
    weights = np.array([0.6, 0.3, 0.1])
    wv = WeightVector(ids=[0, 1, 2], weights=weights)
    rng = np.random.default_rng(3)
    trials = 20_000
    freq = np.bincount([weighted_sample_without_replacement(wv, 1, rng)[0] for _ in range(trials)], minlength=3) / trials
    assert np.all(np.abs(freq - weights) < 4 * np.sqrt(weights * (1 - weights) / trials))


def test_sampler_inclusion_probability():
    n, k, trials = 12, 4, 100_000
    wv = uniform_weights(np.arange(n))
    rng = np.random.default_rng(4)
    counts = np.zeros(n)
    for _ in range(trials):
        drawn = weighted_sample_without_replacement(wv, k, rng)
        assert len(set(drawn.tolist())) == k
        counts[drawn] += 1
    p = k / n
    assert np.all(np.abs(counts / trials - p) < 4 * np.sqrt(p * (1 - p) / trials))


def test_sampler_exhausts_positive_weights_first():
    wv = WeightVector(ids=[0, 1, 2, 3], weights=[0.5, 0.5, 0.0, 0.0])
    rng = np.random.default_rng(5)
    for _ in range(50):
        drawn = weighted_sample_without_replacement(wv, 3, rng)
        assert set(drawn[:2].tolist()) == {0, 1}
        assert drawn[2] in (2, 3)


@pytest.mark.parametrize("k", [0, 4, -1])
def test_sampler_invalid_k(k):
    with pytest.raises(ConfigError):
        weighted_sample_without_replacement(uniform_weights([0, 1, 2]), k, np.random.default_rng(0))


def test_sampler_is_deterministic():
    wv = WeightVector.from_raw(np.arange(50), np.arange(50.0))
    a = weighted_sample_without_replacement(wv, 20, np.random.default_rng(9))
    b = weighted_sample_without_replacement(wv, 20, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


# STRATEGY OBJECTS: =================================


def test_make_strategy():
    assert isinstance(make_strategy("uniform"), UniformStrategy)
    assert isinstance(make_strategy(StrategyKind.QBC), QueryByCommitteeStrategy)
    assert isinstance(make_strategy("margin"), MarginStrategy)
    assert make_strategy("margin").needs_logistic
    for name in ("accuracy", "mse", "disparity"):
        strategy = make_strategy(name)
        assert isinstance(strategy, GroupStrategy)
        assert strategy.kind.is_group_based
        assert not strategy.needs_logistic
    with pytest.raises(ConfigError):
        make_strategy("random-forest")


@pytest.mark.parametrize("name", ["uniform", "qbc", "margin", "accuracy", "mse", "disparity"])
def test_cold_start_is_uniform(name):
    strategy = make_strategy(name)
    pool = group_pool(sizes=(2, 3))
    np.testing.assert_array_equal(strategy.weights(pool).weights, np.full(5, 0.2))
    np.testing.assert_array_equal(strategy.weights(pool, AcquisitionContext()).weights, np.full(5, 0.2))


def test_strategies_use_their_context():
    pool = two_point_pool()
    context = AcquisitionContext(forest=committee())
    np.testing.assert_array_equal(make_strategy("qbc").weights(pool, context).weights, [1.0, 0.0])
    np.testing.assert_array_equal(make_strategy("uniform").weights(pool, context).weights, [0.5, 0.5])
    np.testing.assert_array_equal(make_strategy("margin").weights(pool, context).weights, [0.5, 0.5])
