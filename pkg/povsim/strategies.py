# standard library imports
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Optional

# third-party imports
import numpy as np

# local imports
import povsim.config.config_constants as cfg
from povsim.custom.custom_models import ForestModel, LogisticModel, per_tree_predictions, predict_proba
from povsim.dataset import Dataset
from povsim.errors import ConfigError, EmptyPool, MissingGroupMetric, ValidationError
from povsim.metrics import GroupMetrics


__docformat__ = "google"


class StrategyKind(str, Enum):
    UNIFORM = "uniform"
    QBC = "qbc"
    MARGIN = "margin"
    ACCURACY = "accuracy"
    MSE = "mse"
    DISPARITY = "disparity"

    @property
    def is_group_based(self):
        return self in (StrategyKind.ACCURACY, StrategyKind.MSE, StrategyKind.DISPARITY)

    @classmethod
    def parse(cls, name):
        try:
            return cls(name)
        except ValueError:
            raise ConfigError(f"unknown strategy {name!r}, expected one of {', '.join(cfg.STRATEGY_NAMES)}")


assert tuple(k.value for k in StrategyKind) == cfg.STRATEGY_NAMES


# WEIGHTS: ==========================================


@dataclass(frozen=True, eq=False)
class WeightVector:
    """
    Sampling distribution over the unlabeled pool.

    Args:
        ids (np.ndarray): ids of the unlabeled pool points
        weights (np.ndarray): nonnegative weights summing to 1, aligned with `ids`
    """
    ids: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        ids = np.array(self.ids, dtype=np.int64)
        weights = np.array(self.weights, dtype=np.float64)
        if ids.ndim != 1 or ids.shape != weights.shape:
            raise ValidationError(f"{len(ids)} ids for {weights.size} weights")
        if len(ids) == 0:
            raise EmptyPool("cannot weight an empty pool")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValidationError("weights must be finite and nonnegative")
        if abs(weights.sum() - 1.0) > 1e-9 or not np.any(weights > 0):
            raise ValidationError(f"weights must sum to 1, got {weights.sum()}")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.ids)

    @classmethod
    def uniform(cls, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if len(ids) == 0:
            raise EmptyPool("cannot weight an empty pool")
        return cls(ids=ids, weights=np.full(len(ids), 1.0 / len(ids)))

    @classmethod
    def from_raw(cls, ids, raw):
        """
        Normalizes raw nonnegative scores. All-zero scores give the uniform distribution.
        """
        ids = np.asarray(ids, dtype=np.int64)
        raw = np.asarray(raw, dtype=np.float64)
        if len(ids) == 0:
            raise EmptyPool("cannot weight an empty pool")
        if raw.shape != ids.shape:
            raise ValidationError(f"{len(ids)} ids for {raw.size} raw weights")
        if not np.all(np.isfinite(raw)) or np.any(raw < 0):
            raise ValidationError("raw weights must be finite and nonnegative")
        total = raw.sum()
        if total <= 0:
            logging.debug(f"all {len(ids)} raw weights are zero, falling back to uniform")
            return cls.uniform(ids)
        return cls(ids=ids, weights=raw / total)

    def as_dict(self):
        return {int(i): float(w) for i, w in zip(self.ids, self.weights)}


def uniform_weights(pool_ids) -> WeightVector:
    return WeightVector.uniform(pool_ids)


def committee_variance(predictions) -> np.ndarray:
    """
    Population variance of a T x n matrix of per-member predictions, column-wise.

    Columns on which every member agrees have exactly zero variance.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    agree = np.all(predictions == predictions[:1], axis=0)
    return np.where(agree, 0.0, predictions.var(axis=0))


def qbc_weights(forest: ForestModel, pool: Dataset) -> WeightVector:
    """
    Query-by-committee: weight proportional to the disagreement (variance) of the trees.
    """
    if pool.n == 0:
        raise EmptyPool("cannot weight an empty pool")
    return WeightVector.from_raw(pool.ids, committee_variance(per_tree_predictions(forest, pool.features)))


def margin_scores(proba, epsilon: float = cfg.MARGIN_EPSILON) -> np.ndarray:
    """1 - 2 |p - 1/2|, floored at `epsilon`."""
    proba = np.asarray(proba, dtype=np.float64)
    return np.maximum(1.0 - 2.0 * np.abs(proba - 0.5), epsilon)


def margin_weights(logistic: LogisticModel, pool: Dataset, epsilon: float = cfg.MARGIN_EPSILON) -> WeightVector:
    """
    Margin (uncertainty) sampling: points whose poor / not-poor probability is closest to 1/2 are upweighted.
    """
    if pool.n == 0:
        raise EmptyPool("cannot weight an empty pool")
    return WeightVector.from_raw(pool.ids, margin_scores(predict_proba(logistic, pool.features), epsilon))


def group_scores(kind: StrategyKind, gm: GroupMetrics) -> dict:
    """
    Group-level raw weight: 1 - A_g (accuracy), MSE_g (mse) or 1 - DP_g (disparity).
    """
    kind = StrategyKind(kind)
    if not kind.is_group_based:
        raise ConfigError(f"strategy {kind.value!r} is not group-based")
    if kind == StrategyKind.ACCURACY:
        return {s.label: 1.0 - s.accuracy for s in gm.stats}
    elif kind == StrategyKind.MSE:
        return {s.label: s.mse for s in gm.stats}
    return {s.label: 1.0 - s.dp for s in gm.stats}


def group_weights(kind: StrategyKind, gm: GroupMetrics, pool: Dataset) -> WeightVector:
    """
    Every member of group g gets the same raw weight, the group-level score of `kind`.

    Raises:
        MissingGroupMetric: a group present in the pool has no entry in `gm`
    """
    if pool.n == 0:
        raise EmptyPool("cannot weight an empty pool")
    scores = group_scores(kind, gm)
    present = np.unique(pool.group_index)
    per_group = np.zeros(len(pool.groups))
    for gi in present:
        label = pool.groups[gi].label
        if label not in scores:
            raise MissingGroupMetric(f"no {StrategyKind(kind).value} metric for group {label!r}")
        per_group[gi] = scores[label]
    return WeightVector.from_raw(pool.ids, per_group[pool.group_index])


# SAMPLING: =========================================


def weighted_sample_without_replacement(wv: WeightVector, k: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draws `k` distinct ids, one at a time, each with probability proportional to the remaining weights.

    Once every positive-weight id has been drawn, the remaining draws are uniform over the leftover ids.

    Returns:
        np.ndarray: the drawn ids, in draw order
    """
    n = len(wv)
    if not 1 <= k <= n:
        raise ConfigError(f"cannot draw {k} ids from a pool of {n}")
    remaining = wv.weights.copy()
    chosen = []
    while len(chosen) < k:
        cumulative = np.cumsum(remaining)
        total = cumulative[-1]
        if total <= 0:
            break
        i = int(np.searchsorted(cumulative, rng.random() * total, side="right"))
        if i >= n or remaining[i] <= 0:
            i = int(np.flatnonzero(remaining > 0)[-1])
        chosen.append(i)
        remaining[i] = 0.0
    if len(chosen) < k:
        leftover = np.setdiff1d(np.arange(n), chosen)
        chosen.extend(int(i) for i in rng.choice(leftover, size=k - len(chosen), replace=False))
    drawn = wv.ids[np.asarray(chosen, dtype=np.int64)]
    assert len(np.unique(drawn)) == k, "sampler drew a duplicate id"
    return drawn


# STRATEGY OBJECTS: =================================


@dataclass(frozen=True)
class AcquisitionContext:
    """
    What the previous round left behind for the next acquisition.

    Args:
        forest (ForestModel): forest fitted at the previous round
        logistic (LogisticModel): classifier fitted at the previous round (margin strategy only)
        group_metrics (GroupMetrics): holdout group metrics of the previous round's forest
    """
    forest: Optional[ForestModel] = None
    logistic: Optional[LogisticModel] = None
    group_metrics: Optional[GroupMetrics] = None


class AcquisitionStrategy(ABC):
    """
    Interface of an acquisition strategy.

    `weights` falls back to uniform weights whenever the context lacks what the strategy needs
    (cold start, failed training at the previous round).
    """
    kind: StrategyKind = None
    needs_logistic: bool = False

    @property
    def name(self):
        return self.kind.value

    @abstractmethod
    def ready(self, context: AcquisitionContext) -> bool:
        raise NotImplementedError

    @abstractmethod
    def raw_weights(self, pool: Dataset, context: AcquisitionContext) -> WeightVector:
        raise NotImplementedError

    def weights(self, pool: Dataset, context: Optional[AcquisitionContext] = None) -> WeightVector:
        if context is None or not self.ready(context):
            logging.debug(f"{self.name}: nothing to weight with yet, sampling uniformly")
            return uniform_weights(pool.ids)
        return self.raw_weights(pool, context)

    def __repr__(self):
        return f"{type(self).__name__}()"


class UniformStrategy(AcquisitionStrategy):
    kind = StrategyKind.UNIFORM

    def ready(self, context):
        return True

    def raw_weights(self, pool, context):
        return uniform_weights(pool.ids)


class QueryByCommitteeStrategy(AcquisitionStrategy):
    kind = StrategyKind.QBC

    def ready(self, context):
        return context.forest is not None

    def raw_weights(self, pool, context):
        return qbc_weights(context.forest, pool)


class MarginStrategy(AcquisitionStrategy):
    kind = StrategyKind.MARGIN
    needs_logistic = True

    def __init__(self, epsilon: float = cfg.MARGIN_EPSILON):
        self.epsilon = epsilon

    def ready(self, context):
        return context.logistic is not None

    def raw_weights(self, pool, context):
        return margin_weights(context.logistic, pool, self.epsilon)


class GroupStrategy(AcquisitionStrategy):
    """
    Base of the three group-weighted strategies. A group of the pool missing from the metrics
    (absent from the holdout set) makes the round fall back to uniform weights.
    """
    def ready(self, context):
        return context.group_metrics is not None

    def raw_weights(self, pool, context):
        try:
            return group_weights(self.kind, context.group_metrics, pool)
        except MissingGroupMetric as e:
            logging.warning(f"{self.name}: {e}, sampling uniformly this round")
            return uniform_weights(pool.ids)


class AccuracyWeightedStrategy(GroupStrategy):
    kind = StrategyKind.ACCURACY


class MseWeightedStrategy(GroupStrategy):
    kind = StrategyKind.MSE


class DisparityWeightedStrategy(GroupStrategy):
    kind = StrategyKind.DISPARITY


STRATEGY_CLASSES = {
    StrategyKind.UNIFORM: UniformStrategy,
    StrategyKind.QBC: QueryByCommitteeStrategy,
    StrategyKind.MARGIN: MarginStrategy,
    StrategyKind.ACCURACY: AccuracyWeightedStrategy,
    StrategyKind.MSE: MseWeightedStrategy,
    StrategyKind.DISPARITY: DisparityWeightedStrategy,
}


def make_strategy(kind) -> AcquisitionStrategy:
    kind = kind if isinstance(kind, StrategyKind) else StrategyKind.parse(kind)
    return STRATEGY_CLASSES[kind]()
