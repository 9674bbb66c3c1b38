# standard library imports
import logging
import time
from dataclasses import dataclass, replace
from itertools import groupby
from typing import Dict, List, Optional, Sequence, Tuple

# third-party imports
import numpy as np
from joblib import Parallel, delayed

# local imports
import povsim.config.config_constants as cfg
from povsim.custom.custom_models import (ForestHyperparams, LogisticConfig, cross_validate_depth, fit_forest, fit_logistic, fit_pca,
                                         predict_forest, transform_pca)
from povsim.dataset import Dataset, PovertyThreshold, SplitSpec, split
from povsim.errors import ConfigError, TrainingError, UndefinedMetric
from povsim.memory import AcquisitionMemory
from povsim.metrics import MetricsRecord, evaluate
from povsim.strategies import AcquisitionContext, StrategyKind, make_strategy, weighted_sample_without_replacement
from povsim.util import derive_seed, make_rng, pandas_dict, round_half_up


__docformat__ = "google"


# SCHEDULE: =========================================


@dataclass(frozen=True)
class Schedule:
    """
    Cumulative training-set sizes S_1 < ... < S_T at which models are retrained and evaluated.
    """
    sizes: Tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) == 0 or sizes[0] < 1:
            raise ConfigError(f"a schedule needs positive sizes, got {sizes}")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError(f"schedule sizes must be strictly increasing, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    def __iter__(self):
        return iter(self.sizes)

    def __len__(self):
        return len(self.sizes)

    def __getitem__(self, item):
        return self.sizes[item]

    @property
    def last(self):
        return self.sizes[-1]

    def increments(self):
        """Number of new points acquired at each round (S_t - S_{t-1}, with S_0 = 0)."""
        return tuple(b - a for a, b in zip((0, ) + self.sizes[:-1], self.sizes))


def make_log_schedule(pool_size: int, num_points: int = cfg.SCHEDULE_POINTS, min_size: int = cfg.MIN_BUDGET) -> Schedule:
    """
    Log-spaced budgets from `min_size` to `pool_size`.

    `num_points` values are spaced evenly between ln(min_size) and ln(pool_size), exponentiated and rounded
    half up; duplicates produced by rounding are dropped, so the schedule may be shorter than `num_points`.
    """
    if min_size < 2 or pool_size <= min_size or num_points < 2:
        raise ConfigError(f"invalid schedule bounds: pool_size={pool_size}, num_points={num_points}, min_size={min_size}")
    raw = np.exp(np.linspace(np.log(min_size), np.log(pool_size), num_points))
    sizes = [round_half_up(x) for x in raw]
    sizes[0], sizes[-1] = min_size, pool_size
    return Schedule(tuple(sorted(set(sizes))))


# CONFIGURATION AND RECORDS: ========================


@dataclass(frozen=True)
class SimulationConfig:
    """
    Everything one strategy's experiment depends on (together with the dataset).

    Args:
        strategy (StrategyKind): acquisition strategy
        repetitions (int): number of independent simulations
        schedule_points (int): number of log-spaced budgets (before deduplication)
        min_budget (int): first budget S_1
        split_fraction (float): share of the points in the label pool
        seed (int): seed of the acquisition streams
        split_seed (int): seed of the pool / holdout split
        model_seed (int): seed of the forest streams
        threshold (PovertyThreshold): poverty line
        forest (ForestHyperparams): forest hyperparameters
        logistic (LogisticConfig): margin classifier configuration
        pca_k (int): if set, features are first projected on their top `pca_k` principal axes
        cv_grid (tuple): if set, max_depth is cross-validated over this grid at every round
        cv_folds (int): number of cross-validation folds
        resplit (bool): draw a new pool / holdout split for each repetition
        bootstrap_samples (int): bootstrap resamples per confidence interval
        confidence (float): confidence level of the intervals
        jobs (int): parallel repetition workers
        profile (bool): if True, each repetition is profiled with pyinstrument
    """
    strategy: StrategyKind = StrategyKind.UNIFORM
    repetitions: int = cfg.REPETITIONS
    schedule_points: int = cfg.SCHEDULE_POINTS
    min_budget: int = cfg.MIN_BUDGET
    split_fraction: float = cfg.SPLIT_FRACTION
    seed: int = 0
    split_seed: int = 0
    model_seed: int = 0
    threshold: PovertyThreshold = PovertyThreshold()
    forest: ForestHyperparams = ForestHyperparams()
    logistic: LogisticConfig = LogisticConfig()
    pca_k: Optional[int] = None
    cv_grid: Optional[Tuple[int, ...]] = None
    cv_folds: int = cfg.CV_FOLDS
    resplit: bool = False
    bootstrap_samples: int = cfg.BOOTSTRAP_SAMPLES
    confidence: float = cfg.CONFIDENCE
    jobs: int = 1
    profile: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strategy", StrategyKind.parse(self.strategy) if not isinstance(self.strategy, StrategyKind) else self.strategy)
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if min(self.seed, self.split_seed, self.model_seed) < 0:
            raise ConfigError(f"seeds must be >= 0, got seed={self.seed}, split_seed={self.split_seed}, model_seed={self.model_seed}")
        if self.cv_grid is not None:
            grid = tuple(int(g) for g in self.cv_grid)
            if len(grid) == 0 or min(grid) < 1:
                raise ConfigError(f"cv_grid must be a non-empty list of positive depths, got {list(self.cv_grid)}")
            object.__setattr__(self, "cv_grid", grid)
        if self.cv_folds < 2:
            raise ConfigError(f"cv_folds must be >= 2, got {self.cv_folds}")
        if self.pca_k is not None and self.pca_k < 1:
            raise ConfigError(f"pca_k must be >= 1, got {self.pca_k}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError(f"split_fraction must be in (0, 1), got {self.split_fraction}")
        if self.bootstrap_samples < 100:
            raise ConfigError(f"bootstrap_samples must be >= 100, got {self.bootstrap_samples}")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError(f"confidence must be in (0, 1), got {self.confidence}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.schedule_points < 2 or self.min_budget < 2:
            raise ConfigError(f"invalid schedule: schedule_points={self.schedule_points}, min_budget={self.min_budget}")

    def schedule(self, pool_size: int) -> Schedule:
        return make_log_schedule(pool_size, self.schedule_points, self.min_budget)


@dataclass(frozen=True)
class RunRecord:
    """
    Metrics of one (strategy, repetition, budget) triple.

    Args:
        strategy (str): strategy name
        repetition (int): repetition index
        budget (int): S_t, number of acquired labels
        metrics (MetricsRecord): holdout metrics, all missing when training failed
        digest (str): 64-bit digest of the acquired id set (see `povsim.util.id_digest`)
        depth (int): max_depth chosen by cross-validation, None when cv_grid is not set
    """
    strategy: str
    repetition: int
    budget: int
    metrics: MetricsRecord
    digest: str
    depth: Optional[int] = None

    @property
    def key(self):
        return self.strategy, self.repetition, self.budget


@dataclass(frozen=True)
class IntervalEstimate:
    mean: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class MetricSummary:
    """
    Bootstrap summary of one metric over repetitions. Fields are None when every value is missing.
    """
    mean: Optional[float]
    ci_low: Optional[float]
    ci_high: Optional[float]
    n_missing: int


@dataclass(frozen=True)
class AggregateRecord:
    strategy: str
    budget: int
    metrics: Dict[str, MetricSummary]

    def __getitem__(self, metric) -> MetricSummary:
        return self.metrics[metric]


# SIMULATION LOOP: ==================================


def _select_depth(train: Dataset, config: SimulationConfig, seed: int) -> int:
    if train.n < max(config.cv_folds, config.forest.min_train_size):
        raise TrainingError(f"cannot cross-validate max_depth on {train.n} points")
    return cross_validate_depth(train, config.cv_grid, config.cv_folds, seed, config.forest)


def reduce_features(dataset: Dataset, k: int) -> Dataset:
    """Projects every point's features on the top-k principal axes of the whole feature matrix (labels unused)."""
    transform = fit_pca(dataset, k)
    return dataset.with_features(transform_pca(transform, dataset.features), tuple(f"pc{j}" for j in range(k)))


@dataclass(eq=0)
class Simulation:
    """
    One repetition of the memoryful acquisition loop for one strategy.

    At round t the strategy weights the remaining pool using what round t - 1 left behind (uniform weights
    at round 1), S_t - S_{t-1} ids are drawn without replacement and appended to the acquired set, the
    forest is refitted on the acquired set in canonical order and evaluated on the holdout set.

    Args:
        dataset (Dataset): the full dataset
        split (SplitSpec): pool / holdout partition of `dataset`
        config (SimulationConfig): simulation configuration
        rep_index (int): repetition index (keys the rng streams)
        schedule (Schedule): budgets, None for `config.schedule(pool size)`
    """
    dataset: Dataset = None
    split: SplitSpec = None
    config: SimulationConfig = SimulationConfig()
    rep_index: int = 0
    schedule: Optional[Schedule] = None

    def __post_init__(self):
        dataset = self.dataset
        if self.config.pca_k is not None:
            dataset = reduce_features(dataset, self.config.pca_k)
        self.pool = dataset.subset(self.split.pool)
        self.holdout = dataset.subset(self.split.holdout)
        if self.schedule is None:
            self.schedule = self.config.schedule(self.pool.n)
        if self.schedule.last > self.pool.n:
            raise ConfigError(f"schedule ends at {self.schedule.last} but the label pool only has {self.pool.n} points")
        self.memory = AcquisitionMemory(self.pool.ids)
        self.strategy = make_strategy(self.config.strategy)
        self.context = None

    def run_round(self, t: int, size: int) -> RunRecord:
        config = self.config
        rng = make_rng(config.seed, self.rep_index, t)
        remaining = self.pool.subset(self.memory.remaining)
        wv = self.strategy.weights(remaining, self.context)
        self.memory.append(weighted_sample_without_replacement(wv, size - len(self.memory), rng))
        assert len(self.memory) == size, f"acquired {len(self.memory)} points instead of {size}"

        train = self.pool.subset(self.memory.acquired)
        assert not np.isin(train.ids, self.holdout.ids).any(), "a holdout point is in the training set"
        model_seed = derive_seed(config.model_seed, self.rep_index, t)

        depth, forest, logistic, metrics = None, None, None, MetricsRecord.missing()
        try:
            hyperparams = config.forest
            if config.cv_grid is not None:
                depth = _select_depth(train, config, model_seed)
                hyperparams = replace(hyperparams, max_depth=depth)
            forest = fit_forest(train, hyperparams, model_seed)
            metrics = evaluate(self.holdout, predict_forest(forest, self.holdout.features), config.threshold)
        except TrainingError as e:
            logging.warning(f"{self.strategy.name} rep {self.rep_index} budget {size}: {e}, metrics recorded as missing")
        if self.strategy.needs_logistic:
            try:
                logistic = fit_logistic(train, config.threshold, config.logistic)
            except TrainingError as e:
                logging.warning(f"{self.strategy.name} rep {self.rep_index} budget {size}: {e}, next round samples uniformly")
        self.context = AcquisitionContext(forest=forest, logistic=logistic, group_metrics=metrics.groups)
        return RunRecord(strategy=self.strategy.name,
                         repetition=self.rep_index,
                         budget=size,
                         metrics=metrics,
                         digest=self.memory.digest(),
                         depth=depth)

    def run(self) -> List[RunRecord]:
        records = []
        if self.config.profile:
            from pyinstrument import Profiler
            pro = Profiler()
            pro.start()

        for t, size in enumerate(self.schedule):
            logging.info(f"=== {self.strategy.name} rep {self.rep_index + 1}/{self.config.repetitions} ".ljust(30, '=') + f" round {t + 1}/{len(self.schedule)} ".ljust(30, '='))
            t0 = time.time()
            records.append(self.run_round(t, size))
            m = records[-1].metrics
            stats = pandas_dict(budget=size, spearman=m.spearman, mse=m.mse, accuracy=m.accuracy, add=m.add,
                                depth=records[-1].depth, round_time=time.time() - t0)
            logging.info(stats.add_prefix("  ").to_string() + '\n')

        if self.config.profile:
            pro.stop()
            logging.info(pro.output_text(unicode=True, color=False, show_all=True))
        return records


def run_single_simulation(dataset: Dataset, split_spec: SplitSpec, config: SimulationConfig, rep_index: int,
                          schedule: Optional[Schedule] = None) -> List[RunRecord]:
    """
    Runs one repetition.

    Returns:
        list: one `RunRecord` per budget of the schedule
    """
    return Simulation(dataset=dataset, split=split_spec, config=config, rep_index=rep_index, schedule=schedule).run()


def repetition_split(dataset: Dataset, config: SimulationConfig, rep_index: int) -> SplitSpec:
    """The experiment-wide split, or a per-repetition one when `config.resplit` is set."""
    seed = derive_seed(config.split_seed, rep_index) if config.resplit else config.split_seed
    return split(dataset, config.split_fraction, seed)


def record_sort_key(record: RunRecord):
    return record.key


def run_experiment(dataset: Dataset, config: SimulationConfig, jobs: Optional[int] = None) -> List[RunRecord]:
    """
    Runs `config.repetitions` independent repetitions of `config.strategy`.

    Every repetition has its own rng streams keyed by (seed, rep_index, round), so the returned records,
    sorted by (strategy, repetition, budget), do not depend on `jobs`.
    """
    jobs = config.jobs if jobs is None else jobs
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")
    splits = [repetition_split(dataset, config, r) for r in range(config.repetitions)]
    logging.info(f"running {config.repetitions} repetitions of {config.strategy.value} with {jobs} worker(s)")
    if jobs == 1:
        results = [run_single_simulation(dataset, splits[r], config, r) for r in range(config.repetitions)]
    else:
        results = Parallel(n_jobs=jobs)(delayed(run_single_simulation)(dataset, splits[r], config, r) for r in range(config.repetitions))
    return sorted((rec for recs in results for rec in recs), key=record_sort_key)


# AGGREGATION: ======================================


def bootstrap_ci(values: Sequence[float], samples: int = cfg.BOOTSTRAP_SAMPLES, level: float = cfg.CONFIDENCE, seed: int = 0) -> IntervalEstimate:
    """
    Mean and percentile bootstrap confidence interval of the mean.

    The interval bounds are the (1 - level) / 2 and (1 + level) / 2 quantiles, linearly interpolated, of
    the means of `samples` resamples with replacement.

    Raises:
        UndefinedMetric: fewer than 2 values
    """
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        raise UndefinedMetric(f"a bootstrap interval needs at least 2 values, got {len(values)}")
    if samples < 100:
        raise ConfigError(f"at least 100 bootstrap samples are needed, got {samples}")
    if not 0.0 < level < 1.0:
        raise ConfigError(f"confidence level must be in (0, 1), got {level}")
    if np.all(values == values[0]):
        c = float(values[0])
        return IntervalEstimate(c, c, c)
    mean = float(values.mean())
    rng = np.random.default_rng(seed)
    means = values[rng.integers(0, len(values), size=(samples, len(values)))].mean(axis=1)
    lo, hi = np.percentile(means, [100.0 * (1.0 - level) / 2.0, 100.0 * (1.0 + level) / 2.0])
    return IntervalEstimate(mean=mean, ci_low=min(float(lo), mean), ci_high=max(float(hi), mean))


def _strategy_index(name):
    return cfg.STRATEGY_NAMES.index(name) if name in cfg.STRATEGY_NAMES else len(cfg.STRATEGY_NAMES)


def summarize(values: Sequence[Optional[float]], samples: int, level: float, seed: int) -> MetricSummary:
    present = [v for v in values if v is not None]
    n_missing = len(values) - len(present)
    if len(present) == 0:
        return MetricSummary(None, None, None, n_missing)
    if len(present) == 1:
        return MetricSummary(present[0], present[0], present[0], n_missing)
    ci = bootstrap_ci(present, samples, level, seed)
    return MetricSummary(ci.mean, ci.ci_low, ci.ci_high, n_missing)


def aggregate(records: Sequence[RunRecord], samples: int = cfg.BOOTSTRAP_SAMPLES, seed: int = 0,
              level: float = cfg.CONFIDENCE) -> List[AggregateRecord]:
    """
    One `AggregateRecord` per (strategy, budget), each metric summarized over the repetitions.

    Missing values are excluded from the interval and counted. The resampling stream of each
    (strategy, budget, metric) is derived from `seed`, so the output only depends on the records.
    """
    by_cell = sorted(records, key=lambda r: (r.strategy, r.budget, r.repetition))
    aggregates = []
    for (strategy, budget), cell in groupby(by_cell, key=lambda r: (r.strategy, r.budget)):
        cell = list(cell)
        summaries = {}
        for m, name in enumerate(cfg.METRIC_NAMES):
            values = [getattr(r.metrics, name) for r in cell]
            summaries[name] = summarize(values, samples, level, derive_seed(seed, _strategy_index(strategy), budget, m))
        aggregates.append(AggregateRecord(strategy=strategy, budget=budget, metrics=summaries))
    return aggregates
