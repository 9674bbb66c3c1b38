# standard library imports
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

# third-party imports
import numpy as np
import pandas as pd
from pandas.errors import EmptyDataError, ParserError

# local imports
import povsim.config.config_constants as cfg
from povsim.errors import ConfigError, ParseError, ValidationError
from povsim.util import round_half_up


__docformat__ = "google"


# TYPES: ============================================


@dataclass(frozen=True)
class GroupId:
    """
    Demographic group (e.g. an admin-1 region) of a point.
    """
    label: str
    index: int


@dataclass(frozen=True)
class Point:
    id: int
    group: GroupId
    features: Tuple[float, ...]
    consumption: float  # USD/day per capita


@dataclass(frozen=True)
class PovertyThreshold:
    value: float = cfg.POVERTY_LINE

    def __post_init__(self):
        if not self.value > 0:
            raise ValidationError(f"poverty threshold must be positive, got {self.value}")

    @property
    def log_value(self) -> float:
        return float(np.log(self.value))


@dataclass(frozen=True)
class CsvSchema:
    id_column: str = cfg.ID_COLUMN
    group_column: str = cfg.GROUP_COLUMN
    target_column: str = cfg.TARGET_COLUMN

    @property
    def required(self):
        return self.id_column, self.group_column, self.target_column


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Immutable, array-backed collection of points.

    Row `i` describes the point with id `ids[i]`: its group is `groups[group_index[i]]`,
    its feature vector is `features[i]` and its daily per-capita consumption is `consumption[i]`.

    Groups are always declared in ascending label order: groups given in another order are
    re-indexed on construction and `group_index` is remapped accordingly.

    Args:
        ids (np.ndarray): unique integer ids, shape (N,)
        group_index (np.ndarray): index into `groups` for each point, shape (N,)
        features (np.ndarray): real feature matrix, shape (N, d)
        consumption (np.ndarray): strictly positive consumption, shape (N,)
        groups (tuple): declared `GroupId`s with unique labels, `groups[i].index == i`
        feature_names (tuple): column names of the features (defaults to f0, f1, ...)
    """
    ids: np.ndarray
    group_index: np.ndarray
    features: np.ndarray
    consumption: np.ndarray
    groups: Tuple[GroupId, ...]
    feature_names: Tuple[str, ...] = None

    def __post_init__(self):
        ids = np.array(self.ids, dtype=np.int64)
        group_index = np.array(self.group_index, dtype=np.int64)
        features = np.array(self.features, dtype=np.float64)
        consumption = np.array(self.consumption, dtype=np.float64)
        if features.ndim != 2:
            raise ValidationError(f"features must be a 2D matrix, got shape {features.shape}")
        n = features.shape[0]
        if ids.shape != (n, ) or group_index.shape != (n, ) or consumption.shape != (n, ):
            raise ValidationError(f"ids, groups and consumption must all have length {n}")
        if len(np.unique(ids)) != n:
            raise ValidationError("ids must be unique within a dataset")
        if n > 0 and not np.all(consumption > 0):
            bad = ids[~(consumption > 0)][0]
            raise ValidationError(f"consumption must be positive (id {bad})")
        groups = tuple(self.groups)
        for i, g in enumerate(groups):
            if g.index != i:
                raise ValidationError(f"group {g.label!r} has index {g.index}, expected {i}")
        if n > 0 and (group_index.min() < 0 or group_index.max() >= len(groups)):
            raise ValidationError("every point's group must be one of the declared groups")
        if len({g.label for g in groups}) != len(groups):
            raise ValidationError("group labels must be unique within a dataset")
        order = sorted(range(len(groups)), key=lambda i: groups[i].label)
        if order != list(range(len(groups))):
            remap = np.empty(len(groups), dtype=np.int64)
            remap[order] = np.arange(len(groups))
            group_index = remap[group_index]
            groups = tuple(GroupId(label=groups[i].label, index=k) for k, i in enumerate(order))
        names = self.feature_names
        if names is None:
            names = tuple(f"{cfg.FEATURE_PREFIX}{j}" for j in range(features.shape[1]))
        names = tuple(names)
        if len(names) != features.shape[1]:
            raise ValidationError(f"{len(names)} feature names for {features.shape[1]} features")
        object.__setattr__(self, "ids", _readonly(ids))
        object.__setattr__(self, "group_index", _readonly(group_index))
        object.__setattr__(self, "features", _readonly(features))
        object.__setattr__(self, "consumption", _readonly(consumption))
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def from_points(cls, points: Iterable[Point], groups: Optional[Sequence[GroupId]] = None, feature_names=None):
        points = list(points)
        if groups is None:
            groups = sorted({p.group for p in points}, key=lambda g: g.index)
        groups = tuple(groups)
        if any(p.group not in groups for p in points):
            raise ValidationError("every point's group must be one of the declared groups")
        d = len(points[0].features) if points else 0
        if any(len(p.features) != d for p in points):
            raise ValidationError("all feature vectors must have the same length")
        return cls(ids=np.array([p.id for p in points], dtype=np.int64),
                   group_index=np.array([p.group.index for p in points], dtype=np.int64),
                   features=np.array([p.features for p in points], dtype=np.float64).reshape(len(points), d),
                   consumption=np.array([p.consumption for p in points], dtype=np.float64),
                   groups=groups,
                   feature_names=feature_names)

    def __len__(self):
        return len(self.ids)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.groups == other.groups
                and self.feature_names == other.feature_names
                and np.array_equal(self.ids, other.ids)
                and np.array_equal(self.group_index, other.group_index)
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.consumption, other.consumption))

    __hash__ = None

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def dimensionality(self) -> int:
        return self.features.shape[1]

    @property
    def log_consumption(self) -> np.ndarray:
        return np.log(self.consumption)

    @property
    def group_labels(self) -> np.ndarray:
        labels = np.array([g.label for g in self.groups], dtype=object)
        return labels[self.group_index] if len(self.groups) else np.array([], dtype=object)

    @property
    def points(self) -> List[Point]:
        return [Point(id=int(i), group=self.groups[g], features=tuple(float(x) for x in f), consumption=float(c))
                for i, g, f, c in zip(self.ids, self.group_index, self.features, self.consumption)]

    def subset(self, ids: Iterable[int]) -> "Dataset":
        """
        Sub-dataset restricted to `ids`, in canonical (ascending id) order.

        Declared groups are kept, even those with no remaining point.
        """
        wanted = np.unique(np.fromiter((int(i) for i in ids), dtype=np.int64))
        order = np.argsort(self.ids, kind="stable")
        pos = np.searchsorted(self.ids[order], wanted)
        if len(wanted) and (pos.max() >= len(order) or not np.array_equal(self.ids[order][pos], wanted)):
            raise ValidationError("subset requested ids that are not in the dataset")
        rows = order[pos]
        return Dataset(ids=self.ids[rows],
                       group_index=self.group_index[rows],
                       features=self.features[rows],
                       consumption=self.consumption[rows],
                       groups=self.groups,
                       feature_names=self.feature_names)

    def canonical(self) -> "Dataset":
        return self.subset(self.ids)

    def with_features(self, features: np.ndarray, feature_names=None) -> "Dataset":
        return Dataset(ids=self.ids,
                       group_index=self.group_index,
                       features=features,
                       consumption=self.consumption,
                       groups=self.groups,
                       feature_names=feature_names)

    def group_sizes(self) -> dict:
        counts = np.bincount(self.group_index, minlength=len(self.groups))
        return {g.label: int(c) for g, c in zip(self.groups, counts)}


@dataclass(frozen=True)
class SplitSpec:
    """
    Partition of a dataset's ids into the label pool and the holdout validation set.
    """
    pool_ids: FrozenSet[int]
    holdout_ids: FrozenSet[int]
    seed: int

    def __post_init__(self):
        if self.pool_ids & self.holdout_ids:
            raise ValidationError("pool and holdout ids must be disjoint")

    @property
    def pool(self) -> np.ndarray:
        return np.array(sorted(self.pool_ids), dtype=np.int64)

    @property
    def holdout(self) -> np.ndarray:
        return np.array(sorted(self.holdout_ids), dtype=np.int64)


@dataclass(frozen=True)
class SyntheticTruth:
    """
    Parameters of the log-linear model that generated a synthetic dataset:
    log(consumption) = intercept + features @ coefficients + group_offsets[group] + noise
    """
    intercept: float
    coefficients: np.ndarray = field(repr=False)
    group_offsets: np.ndarray = field(repr=False)
    noise_sd: float


# INGESTION: ========================================


def _parse_float_column(values, column):
    try:
        return np.array([float(v) for v in values], dtype=np.float64)
    except ValueError as e:
        raise ParseError(f"column {column!r}: {e}")


def load_csv(path: Union[str, Path], schema: CsvSchema = CsvSchema()) -> Dataset:
    """
    Reads a dataset from a CSV file with header `id,group,consumption,f0,f1,...`.

    Feature columns are every column that is not id, group or consumption, in header order.
    Groups are declared in ascending label order.

    Args:
        path: CSV file (UTF-8, `.` decimal separator)
        schema (CsvSchema): names of the id, group and consumption columns

    Returns:
        Dataset: one point per data row

    Raises:
        ParseError: missing columns, ragged rows, missing / duplicate / non-integer ids, non-numeric cells
        ValidationError: non-positive consumption
    """
    path = Path(path)
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    except ParserError as e:
        raise ParseError(f"{path}: ragged rows ({e})")
    except EmptyDataError:
        raise ParseError(f"{path}: empty file")
    header = [str(h) for h in raw.iloc[0].tolist()]
    body = raw.iloc[1:].copy()
    missing = [c for c in schema.required if c not in header]
    if missing:
        raise ParseError(f"{path}: header lacks column(s) {missing}")
    feature_names = tuple(h for h in header if h not in schema.required)
    if not feature_names:
        raise ParseError(f"{path}: header declares no feature column")
    if len(set(header)) != len(header):
        raise ParseError(f"{path}: duplicate column names in header")
    body.columns = header
    empty = body.isna() | (body == "")
    if empty.to_numpy().any():
        row = int(np.argmax(empty.to_numpy().any(axis=1)))
        raise ParseError(f"{path}: data row {row + 1} has missing fields (ragged rows are not supported)")

    try:
        ids = np.array([int(v) for v in body[schema.id_column]], dtype=np.int64)
    except ValueError as e:
        raise ParseError(f"{path}: invalid id ({e})")
    uniq, counts = np.unique(ids, return_counts=True)
    if np.any(counts > 1):
        raise ParseError(f"{path}: duplicate id {int(uniq[counts > 1][0])}")

    consumption = _parse_float_column(body[schema.target_column], schema.target_column)
    if not np.all(consumption > 0):
        bad = ids[~(consumption > 0)][0]
        raise ValidationError(f"{path}: consumption must be positive (id {bad})")
    features = np.column_stack([_parse_float_column(body[c], c) for c in feature_names])

    labels = body[schema.group_column].to_numpy(dtype=object)
    groups = tuple(GroupId(label=str(lab), index=i) for i, lab in enumerate(sorted(set(labels))))
    lookup = {g.label: g.index for g in groups}
    group_index = np.array([lookup[lab] for lab in labels], dtype=np.int64)

    ds = Dataset(ids=ids, group_index=group_index, features=features, consumption=consumption, groups=groups,
                 feature_names=feature_names)
    logging.debug(f"loaded {path}: N={ds.n}, d={ds.dimensionality}, groups={len(groups)}")
    return ds


def write_csv(dataset: Dataset, path: Union[str, Path], schema: CsvSchema = CsvSchema()):
    """
    Writes `dataset` in the schema read by `load_csv`; floats use their shortest round-trip representation.

    Raises:
        ValidationError: a declared group has no point (the schema cannot declare it)
    """
    empty = [label for label, size in dataset.group_sizes().items() if size == 0]
    if empty:
        raise ValidationError(f"group(s) {empty} have no point and cannot be written to a CSV file")
    df =pd.DataFrame(dataset.features, columns=list(dataset.feature_names))
    df.insert(0, schema.target_column, dataset.consumption)
    df.insert(0, schema.group_column, dataset.group_labels)
    df.insert(0, schema.id_column, dataset.ids)
    df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


# SYNTHETIC DATA: ===================================


def make_synthetic(n: int, d: int, n_groups: int, noise_sd: float = 0.5, seed: int = 0) -> Tuple[Dataset, SyntheticTruth]:
    """
    Draws a synthetic survey with log-linear consumption.

    Features come from group-shifted standard Gaussians and
    `log(consumption) = intercept + features @ coefficients + group_offsets[group] + N(0, noise_sd^2)`,
    so consumption is always positive and a regression on log-consumption is well specified.
    Every group receives at least one point.

    Returns:
        (Dataset, SyntheticTruth): the data and the parameters that generated it
    """
    if not (isinstance(n, (int, np.integer)) and isinstance(d, (int, np.integer)) and isinstance(n_groups, (int, np.integer))):
        raise ConfigError("n, d and n_groups must be integers")
    if n_groups < 1 or n < n_groups:
        raise ConfigError(f"need n >= n_groups >= 1, got n={n}, n_groups={n_groups}")
    if d < 1:
        raise ConfigError(f"need d >= 1, got d={d}")
    if not noise_sd >= 0:
        raise ConfigError(f"noise_sd must be non-negative, got {noise_sd}")

    rng = np.random.default_rng(seed)
    group_shift = rng.normal(0.0, 1.0, size=(n_groups, d))
    group_index = rng.permutation(np.arange(n) % n_groups)
    features = group_shift[group_index] + rng.normal(0.0, 1.0, size=(n, d))
    coefficients = rng.normal(0.0, 0.4 / np.sqrt(d), size=d)
    group_offsets = rng.normal(0.0, 0.3, size=n_groups)
    intercept = float(np.log(cfg.POVERTY_LINE) + 0.3)
    noise = rng.normal(0.0, noise_sd, size=n) if noise_sd > 0 else np.zeros(n)
    log_consumption = intercept + features @ coefficients + group_offsets[group_index] + noise

    width = len(str(n_groups - 1))
    groups = tuple(GroupId(label=f"region_{i:0{width}d}", index=i) for i in range(n_groups))
    ds = Dataset(ids=np.arange(n, dtype=np.int64),
                 group_index=group_index,
                 features=features,
                 consumption=np.exp(log_consumption),
                 groups=groups)
    truth = SyntheticTruth(intercept=intercept, coefficients=coefficients, group_offsets=group_offsets, noise_sd=float(noise_sd))
    return ds, truth


def generate_synthetic(n: int, d: int, n_groups: int, noise_sd: float = 0.5, seed: int = 0) -> Dataset:
    return make_synthetic(n, d, n_groups, noise_sd, seed)[0]


# SPLIT AND LABELS: =================================


def split(dataset: Dataset, fraction: float = cfg.SPLIT_FRACTION, seed: int = 0) -> SplitSpec:
    """
    Uniform-at-random partition of the ids into a label pool of size round(fraction * N) and a holdout set.

    The split is not stratified by group.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must be in (0, 1), got {fraction}")
    n_pool = round_half_up(fraction * dataset.n)
    if n_pool == 0 or n_pool == dataset.n:
        raise ConfigError(f"a split of {dataset.n} points with fraction {fraction} leaves an empty pool or holdout")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(np.sort(dataset.ids))
    return SplitSpec(pool_ids=frozenset(int(i) for i in perm[:n_pool]),
                     holdout_ids=frozenset(int(i) for i in perm[n_pool:]),
                     seed=seed)


def is_poor(consumption: float, threshold: PovertyThreshold = PovertyThreshold()) -> bool:
    """
    True iff `consumption` is strictly below the poverty line; "poor" is the positive class.
    """
    return bool(consumption < threshold.value)


def poverty_labels(consumption: np.ndarray, threshold: PovertyThreshold = PovertyThreshold()) -> np.ndarray:
    return np.asarray(consumption) < threshold.value
