# standard library imports
from itertools import product

# third-party imports
import numpy as np
import pytest
from scipy.stats import spearmanr
from sklearn.metrics import roc_auc_score

# local imports
import povsim.config.config_constants as cfg
from povsim.dataset import PovertyThreshold, poverty_labels
from povsim.errors import ShapeError, UndefinedMetric
from povsim.metrics import (ConfusionCounts, GroupMetrics, GroupStat, MetricsRecord, auroc, classification_metrics, evaluate,
                            fairness_summaries, group_metrics, mse, spearman_rho)

from conftest import make_dataset


POOR, RICH = 1.0, 5.0  # consumption on each side of the 1.90 line


def ranks_by_hand(x):
    x = list(x)
    out = []
    for v in x:
        below = sum(1 for u in x if u < v)
        equal = sum(1 for u in x if u == v)
        out.append(below + (equal + 1) / 2.0)
    return np.array(out)


def pearson(a, b):
    a, b = a - a.mean(), b - b.mean()
    return np.sum(a * b) / np.sqrt(np.sum(a * a) * np.sum(b * b))


def auroc_by_pairs(labels, scores):
    pos, neg = scores[labels], scores[~labels]
    total = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p, q in product(pos, neg))
    return total / (len(pos) * len(neg))


def holdout_from_cells(cells, labels=("a", "b")):
    """
    Holdout set and predictions from per-group confusion cells, e.g. {"a": dict(tp=3, fp=1, fn=2, tn=4)}.
    """
    consumption, preds, groups = [], [], []
    for g, label in enumerate(labels):
        c = cells.get(label, {})
        for cell, (truth, pred) in {"tp": (POOR, POOR), "tn": (RICH, RICH), "fp": (RICH, POOR), "fn": (POOR, RICH)}.items():
            for _ in range(c.get(cell, 0)):
                consumption.append(truth)
                preds.append(np.log(pred))
                groups.append(g)
    n = len(consumption)
    ds = make_dataset(np.zeros(n), consumption, group_index=np.array(groups, dtype=np.int64), labels=list(labels))
    return ds, np.array(preds)


def random_holdout(rng, n_groups=3):
    n = int(rng.integers(n_groups, 60))
    group_index = np.concatenate([np.arange(n_groups), rng.integers(0, n_groups, size=n - n_groups)])
    consumption = np.exp(rng.normal(np.log(1.9), 0.6, size=n))
    ds = make_dataset(rng.normal(size=(n, 2)), consumption, group_index=group_index, labels=[f"g{i}" for i in range(n_groups)])
    preds = ds.log_consumption + rng.normal(0.0, 0.5, size=n)
    return ds, preds


# SPEARMAN AND MSE: =================================


def test_spearman_examples():
    assert spearman_rho([1, 2, 3], [10, 20, 30]) == 1.0
    assert spearman_rho([1, 2, 3], [3, 2, 1]) == -1.0
    y, p = [1, 2, 2, 4], [1, 3, 2, 4]
    assert spearman_rho(y, p) == pytest.approx(pearson(ranks_by_hand(y), ranks_by_hand(p)), abs=1e-12)


def test_spearman_undefined():
    with pytest.raises(UndefinedMetric):
        spearman_rho([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(UndefinedMetric):
        spearman_rho([1.0, 2.0], [5.0, 5.0])
    with pytest.raises(UndefinedMetric):
        spearman_rho([1.0], [2.0])
    with pytest.raises(ShapeError):
        spearman_rho([1.0, 2.0], [1.0, 2.0, 3.0])


def test_spearman_against_oracles():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(3, 12))
        y = rng.integers(0, 5, size=n).astype(float)  # plenty of ties
        p = rng.integers(0, 5, size=n).astype(float)
        if np.all(y == y[0]) or np.all(p == p[0]):
            continue
        rho = spearman_rho(y, p)
        assert rho == pytest.approx(pearson(ranks_by_hand(y), ranks_by_hand(p)), abs=1e-12)
        assert rho == pytest.approx(spearmanr(y, p)[0], abs=1e-12)
        assert -1.0 <= rho <= 1.0


def test_spearman_is_invariant_to_increasing_transforms():
    rng = np.random.default_rng(1)
    for _ in range(50):
        y, p = rng.normal(size=30), rng.normal(size=30)
        rho = spearman_rho(y, p)
        assert spearman_rho(np.exp(y), p) == rho
        assert spearman_rho(y, 3.0 * p ** 3 + 1.0) == rho


def test_mse_examples():
    assert mse([1.5, -2.0], [1.5, -2.0]) == 0.0
    assert mse([0.0, 0.0], [1.0, 3.0]) == 5.0
    y, p = np.array([0.3, 1.2, -0.7]), np.array([1.0, 0.2, 0.1])
    assert mse(y + 7.0, p + 7.0) == pytest.approx(mse(y, p), abs=1e-12)
    with pytest.raises(UndefinedMetric):
        mse([], [])


# CLASSIFICATION: ===================================


def test_auroc_examples():
    labels = np.array([True, True, False, False])
    assert auroc(labels, [0.35, 0.8, 0.1, 0.4]) == 0.75
    assert auroc(labels, [0.9, 0.8, 0.1, 0.2]) == 1.0
    assert auroc(labels, [0.5, 0.5, 0.5, 0.5]) == 0.5
    with pytest.raises(UndefinedMetric):
        auroc([True, True], [0.1, 0.2])


def test_auroc_against_oracles():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n = int(rng.integers(2, 15))
        labels = rng.random(n) < 0.5
        if labels.all() or not labels.any():
            continue
        scores = rng.integers(0, 6, size=n).astype(float)
        value = auroc(labels, scores)
        assert value == pytest.approx(auroc_by_pairs(labels, scores), abs=1e-12)
        assert value == pytest.approx(roc_auc_score(labels, scores), abs=1e-12)


def test_auroc_symmetry_without_ties():
    rng = np.random.default_rng(3)
    for _ in range(100):
        labels = np.arange(20) % 3 == 0
        s = rng.normal(size=20)
        assert auroc(labels, s) + auroc(labels, -s) == pytest.approx(1.0, abs=1e-12)


def test_classification_metrics_examples():
    scores = classification_metrics(ConfusionCounts(tp=3, tn=4, fp=1, fn=2))
    assert scores.accuracy == pytest.approx(0.7)
    assert scores.precision == pytest.approx(0.75)
    assert scores.recall == pytest.approx(0.6)
    perfect = classification_metrics(ConfusionCounts(tp=5, tn=2))
    assert (perfect.accuracy, perfect.precision, perfect.recall) == (1.0, 1.0, 1.0)
    nobody_flagged = classification_metrics(ConfusionCounts(tn=6, fn=2))
    assert nobody_flagged.precision is None
    assert nobody_flagged.recall == 0.0
    with pytest.raises(UndefinedMetric):
        classification_metrics(ConfusionCounts())


def test_confusion_counts_from_labels():
    counts = ConfusionCounts.from_labels([True, True, False, False, True], [True, False, True, False, True])
    assert counts == ConfusionCounts(tp=2, tn=1, fp=1, fn=1)
    assert counts.total == 5
    assert counts + counts == ConfusionCounts(tp=4, tn=2, fp=2, fn=2)


# GROUPS AND FAIRNESS: ==============================


def test_group_metrics_examples():
    ds, preds = holdout_from_cells({"a": dict(tp=3, fp=1, fn=2, tn=4), "b": dict(tp=2, fp=1, fn=1, tn=1)})
    gm = group_metrics(ds, preds)
    assert gm.labels == ("a", "b")
    assert gm["a"].counts == ConfusionCounts(tp=3, tn=4, fp=1, fn=2)
    assert gm["a"].n == 10
    assert gm["a"].dp == pytest.approx(-0.1, abs=1e-12)
    assert gm["a"].accuracy == pytest.approx(0.7)
    assert gm["b"].dp == 0.0
    assert gm.absent == ()


def test_group_metrics_perfect_predictions():
    ds, _ = holdout_from_cells({"a": dict(tp=2, tn=3), "b": dict(tp=1, tn=1)})
    gm = group_metrics(ds, ds.log_consumption)
    for s in gm.stats:
        assert (s.accuracy, s.mse, s.dp) == (1.0, 0.0, 0.0)


def test_group_absent_from_holdout_is_flagged():
    ds, preds = holdout_from_cells({"a": dict(tp=1, tn=2)}, labels=("a", "b", "c"))
    gm = group_metrics(ds, preds)
    assert gm.labels == ("a", )
    assert gm.absent == ("b", "c")
    assert "b" not in gm
    with pytest.raises(KeyError):
        gm["b"]


def stat(label, accuracy=1.0, mse=0.0, dp=0.0):
    return GroupStat(label=label, n=10, accuracy=accuracy, mse=mse, dp=dp, counts=ConfusionCounts())


def test_fairness_summary_examples():
    assert fairness_summaries(GroupMetrics((stat("a", dp=0.1), stat("b", dp=-0.2)))).add == pytest.approx(0.3)
    assert fairness_summaries(GroupMetrics((stat("a", accuracy=0.55), ))).min_group_accuracy == 0.55
    gm = GroupMetrics((stat("a", 0.9, 1.0), stat("b", 0.6, 2.5), stat("c", 0.8, 0.3)))
    summary = fairness_summaries(gm)
    assert summary.min_group_accuracy == 0.6
    assert summary.max_group_mse == 2.5
    with pytest.raises(UndefinedMetric):
        fairness_summaries(GroupMetrics(()))


def test_group_table_invariants():
    rng = np.random.default_rng(4)
    threshold = PovertyThreshold()
    for _ in range(150):
        ds, preds = random_holdout(rng)
        gm = group_metrics(ds, preds, threshold)
        record = evaluate(ds, preds, threshold)

        total = sum((s.counts for s in gm.stats), ConfusionCounts())
        assert total == ConfusionCounts.from_labels(poverty_labels(ds.consumption), preds < threshold.log_value)

        weighted = sum(s.n * s.mse for s in gm.stats) / ds.n
        assert weighted == pytest.approx(record.mse, abs=1e-12)

        for s in gm.stats:
            c = s.counts
            assert s.dp == pytest.approx(((c.tp + c.fp) - (c.tp + c.fn)) / s.n, abs=1e-15)
            assert 0.0 <= s.accuracy <= 1.0
            assert -1.0 <= s.dp <= 1.0
        assert (record.add == 0.0) == all(s.counts.fp == s.counts.fn for s in gm.stats)
        assert record.min_group_accuracy <= record.accuracy <= max(s.accuracy for s in gm.stats)
        assert record.add >= 0.0


# PANEL: ============================================


def test_evaluate_full_panel():
    ds, preds = holdout_from_cells({"a": dict(tp=3, fp=1, fn=2, tn=4), "b": dict(tp=2, fp=1, fn=1, tn=1)})
    preds = preds + np.linspace(0.0, 0.01, len(preds))  # breaks ties for spearman
    record = evaluate(ds, preds)
    assert record.accuracy == pytest.approx(10 / 15)
    assert record.precision == pytest.approx(5 / 7)
    assert record.recall == pytest.approx(5 / 8)
    assert record.add == pytest.approx(0.1)
    assert record.min_group_accuracy == pytest.approx(0.6)
    assert record.spearman is not None
    assert record.auroc == pytest.approx(roc_auc_score(poverty_labels(ds.consumption), -preds), abs=1e-12)
    assert tuple(record.as_dict()) == cfg.METRIC_NAMES
    assert record.groups.labels == ("a", "b")


def test_undefined_metrics_are_missing_not_zero():
    ds, preds = holdout_from_cells({"a": dict(tn=3), "b": dict(tn=2)})
    record = evaluate(ds, preds)
    assert record.auroc is None  # single class
    assert record.precision is None
    assert record.recall is None
    assert record.spearman is None  # constant truth
    assert record.accuracy == 1.0
    assert MetricsRecord.missing().as_dict() == {name: None for name in cfg.METRIC_NAMES}
