# standard library imports
from dataclasses import asdict, dataclass, fields
from typing import Dict, Optional, Tuple

# third-party imports
import numpy as np
from scipy.stats import rankdata

# local imports
import povsim.config.config_constants as cfg
from povsim.dataset import Dataset, PovertyThreshold, poverty_labels
from povsim.errors import ShapeError, UndefinedMetric


__docformat__ = "google"


# TYPES: ============================================


@dataclass(frozen=True)
class ConfusionCounts:
    """
    Confusion counts with "poor" as the positive class.
    """
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @classmethod
    def from_labels(cls, truth, predicted):
        truth = np.asarray(truth, dtype=bool)
        predicted = np.asarray(predicted, dtype=bool)
        return cls(tp=int(np.sum(truth & predicted)),
                   tn=int(np.sum(~truth & ~predicted)),
                   fp=int(np.sum(~truth & predicted)),
                   fn=int(np.sum(truth & ~predicted)))

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class ClassificationScores:
    accuracy: float
    precision: Optional[float]  # None when tp + fp == 0
    recall: Optional[float]  # None when tp + fn == 0


@dataclass(frozen=True)
class GroupStat:
    label: str
    n: int
    accuracy: float
    mse: float
    dp: float
    counts: ConfusionCounts


@dataclass(frozen=True)
class GroupMetrics:
    """
    Per-group metrics on the holdout set.

    Args:
        stats (tuple): one `GroupStat` per group present in the evaluated points, in declared group order
        absent (tuple): labels of declared groups with no evaluated point (omitted from `stats`)
    """
    stats: Tuple[GroupStat, ...]
    absent: Tuple[str, ...] = ()

    def __getitem__(self, label) -> GroupStat:
        for s in self.stats:
            if s.label == label:
                return s
        raise KeyError(label)

    def __contains__(self, label):
        return any(s.label == label for s in self.stats)

    def __len__(self):
        return len(self.stats)

    @property
    def labels(self):
        return tuple(s.label for s in self.stats)


@dataclass(frozen=True)
class FairnessSummary:
    min_group_accuracy: float
    max_group_mse: float
    add: float


@dataclass(frozen=True)
class MetricsRecord:
    """
    Full evaluation panel of one fitted model on the holdout set.

    Undefined metrics are None (missing), never 0.
    """
    spearman: Optional[float] = None
    mse: Optional[float] = None
    auroc: Optional[float] = None
    accuracy: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    min_group_accuracy: Optional[float] = None
    max_group_mse: Optional[float] = None
    add: Optional[float] = None
    groups: Optional[GroupMetrics] = None

    def as_dict(self) -> Dict[str, Optional[float]]:
        return {name: getattr(self, name) for name in cfg.METRIC_NAMES}

    @classmethod
    def missing(cls):
        return cls()


assert tuple(f.name for f in fields(MetricsRecord))[:-1] == cfg.METRIC_NAMES


# REGRESSION METRICS: ===============================


def _pair(truth, preds):
    truth = np.asarray(truth, dtype=np.float64)
    preds = np.asarray(preds, dtype=np.float64)
    if truth.shape != preds.shape or truth.ndim != 1:
        raise ShapeError(f"expected two vectors of equal length, got shapes {truth.shape} and {preds.shape}")
    return truth, preds


def spearman_rho(truth, preds) -> float:
    """
    Spearman rank correlation: Pearson correlation of average ranks (ties share the mean of their rank span).

    Raises:
        UndefinedMetric: fewer than 2 points or a constant vector on either side
    """
    truth, preds = _pair(truth, preds)
    if len(truth) < 2:
        raise UndefinedMetric("spearman needs at least 2 points")
    if np.all(truth == truth[0]) or np.all(preds == preds[0]):
        raise UndefinedMetric("spearman is undefined for a constant vector")
    a = rankdata(truth, method="average")
    b = rankdata(preds, method="average")
    a = a - a.mean()
    b = b - b.mean()
    rho = float(np.sum(a * b) / np.sqrt(np.sum(a * a) * np.sum(b * b)))
    return min(1.0, max(-1.0, rho))


def mse(truth, preds) -> float:
    truth, preds = _pair(truth, preds)
    if len(truth) == 0:
        raise UndefinedMetric("mse of an empty vector")
    return float(np.mean((truth - preds) ** 2))


# CLASSIFICATION METRICS: ===========================


def auroc(truth_labels, scores) -> float:
    """
    Probability that a random positive scores higher than a random negative, ties counting 1/2
    (Mann-Whitney U / (n_pos * n_neg)).

    Raises:
        UndefinedMetric: only one class is present
    """
    labels = np.asarray(truth_labels, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ShapeError(f"expected two vectors of equal length, got shapes {labels.shape} and {scores.shape}")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("auroc needs both classes")
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def classification_metrics(counts: ConfusionCounts) -> ClassificationScores:
    if counts.total == 0:
        raise UndefinedMetric("no evaluated point")
    accuracy = (counts.tp + counts.tn) / counts.total
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp > 0 else None
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn > 0 else None
    return ClassificationScores(accuracy=accuracy, precision=precision, recall=recall)


# GROUP AND FAIRNESS METRICS: =======================


def group_metrics(holdout: Dataset, preds, threshold: PovertyThreshold = PovertyThreshold()) -> GroupMetrics:
    """
    Per-group confusion counts, accuracy A_g, log-space MSE_g and demographic parity
    DP_g = ((TP_g + FP_g) - (TP_g + FN_g)) / N_g = (FP_g - FN_g) / N_g.

    Predictions (log-consumption) are binarized at log(threshold). Declared groups without any
    evaluated point are omitted and listed in `absent`.
    """
    truth_log, preds = _pair(holdout.log_consumption, preds)
    truth_poor = poverty_labels(holdout.consumption, threshold)
    pred_poor = preds < threshold.log_value
    stats, absent = [], []
    for g in holdout.groups:
        mask = holdout.group_index == g.index
        n_g = int(mask.sum())
        if n_g == 0:
            absent.append(g.label)
            continue
        counts = ConfusionCounts.from_labels(truth_poor[mask], pred_poor[mask])
        stats.append(GroupStat(label=g.label,
                               n=n_g,
                               accuracy=(counts.tp + counts.tn) / n_g,
                               mse=float(np.mean((truth_log[mask] - preds[mask]) ** 2)),
                               dp=(counts.fp - counts.fn) / n_g,
                               counts=counts))
    return GroupMetrics(stats=tuple(stats), absent=tuple(absent))


def fairness_summaries(gm: GroupMetrics) -> FairnessSummary:
    """
    Worst-case group accuracy (min), worst-case group MSE (max) and ADD = sum_g |DP_g|.
    """
    if len(gm) == 0:
        raise UndefinedMetric("no group to summarize")
    return FairnessSummary(min_group_accuracy=min(s.accuracy for s in gm.stats),
                           max_group_mse=max(s.mse for s in gm.stats),
                           add=float(sum(abs(s.dp) for s in gm.stats)))


# PANEL: ============================================


def _defined(fn, *args):
    try:
        return fn(*args)
    except UndefinedMetric:
        return None


def evaluate(holdout: Dataset, preds, threshold: PovertyThreshold = PovertyThreshold()) -> MetricsRecord:
    """
    Full metric panel of log-consumption predictions `preds` on `holdout`.

    The poverty score used for AUROC is the negated predicted log-consumption.
    """
    truth_log, preds = _pair(holdout.log_consumption, preds)
    truth_poor = poverty_labels(holdout.consumption, threshold)
    counts = ConfusionCounts.from_labels(truth_poor, preds < threshold.log_value)
    scores = _defined(classification_metrics, counts)
    gm = group_metrics(holdout, preds, threshold)
    summary = _defined(fairness_summaries, gm)
    return MetricsRecord(spearman=_defined(spearman_rho, truth_log, preds),
                         mse=_defined(mse, truth_log, preds),
                         auroc=_defined(auroc, truth_poor, -preds),
                         accuracy=scores.accuracy if scores else None,
                         precision=scores.precision if scores else None,
                         recall=scores.recall if scores else None,
                         min_group_accuracy=summary.min_group_accuracy if summary else None,
                         max_group_mse=summary.max_group_mse if summary else None,
                         add=summary.add if summary else None,
                         groups=gm)
