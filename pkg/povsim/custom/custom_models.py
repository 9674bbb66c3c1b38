# === povsim learners ==================================================================================================


# standard library imports
import logging
from dataclasses import dataclass, field, replace
from math import ceil
from typing import Optional, Sequence, Tuple, Union

# third-party imports
import numpy as np
import torch
import torch.nn.functional as F
from sklearn.model_selection import KFold

# local imports
import povsim.config.config_constants as cfg
from povsim.custom.utils.nn import as_tensor, detach, grad_norm, value_and_grad
from povsim.dataset import Dataset, PovertyThreshold, poverty_labels
from povsim.errors import ConfigError, DegenerateLabels, ShapeError, TrainingError
from povsim.util import make_rng


LEAF = -1


def _check_width(features, d):
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != d:
        raise ShapeError(f"expected a batch of width {d}, got shape {features.shape}")
    return features


# REGRESSION TREES: =================================================


@dataclass(frozen=True)
class ForestHyperparams:
    """
    Args:
        n_trees (int): committee size T (at least 2, committee variance needs two members)
        max_depth (int): maximum depth of each tree
        min_leaf (int): minimum number of (bootstrap) samples in a leaf
        max_features (int): feature candidates per split, None for ceil(d / 3)
        min_train_size (int): smallest training set a forest is fitted on
    """
    n_trees: int = cfg.N_TREES
    max_depth: int = cfg.MAX_DEPTH
    min_leaf: int = cfg.MIN_LEAF
    max_features: Optional[int] = None
    min_train_size: int = cfg.MIN_TRAIN_SIZE

    def __post_init__(self):
        if self.n_trees < 2:
            raise ConfigError(f"n_trees must be >= 2, got {self.n_trees}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ConfigError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.max_features is not None and self.max_features < 1:
            raise ConfigError(f"max_features must be >= 1, got {self.max_features}")
        if self.min_train_size < 1:
            raise ConfigError(f"min_train_size must be >= 1, got {self.min_train_size}")

    def candidates(self, d):
        m = self.max_features if self.max_features is not None else ceil(d / 3)
        return min(max(m, 1), d)


@dataclass(frozen=True, eq=False)
class TreeModel:
    """
    Binary regression tree stored as flat node arrays.

    Node 0 is the root. For an internal node `i`, a sample goes to `left[i]` when
    `x[feature[i]] <= threshold[i]` and to `right[i]` otherwise. Leaves have `feature[i] == -1`
    and predict `value[i]`, the mean of the training targets that reached them.
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int

    def __post_init__(self):
        internal = np.asarray(self.feature) != LEAF
        assert np.all(np.asarray(self.feature)[internal] < self.n_features), "split on an invalid feature index"
        assert np.all(np.isfinite(np.asarray(self.value)[~internal])), "non-finite leaf prediction"

    @classmethod
    def leaf(cls, value, n_features):
        return cls(feature=np.array([LEAF]), threshold=np.array([np.nan]), left=np.array([LEAF]),
                   right=np.array([LEAF]), value=np.array([float(value)]), n_features=n_features)

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def depth(self):
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def predict(self, features):
        features = _check_width(features, self.n_features)
        rows = np.arange(features.shape[0])
        node = np.zeros(features.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            internal = feat != LEAF
            if not internal.any():
                break
            go_left = features[rows[internal], feat[internal]] <= self.threshold[node[internal]]
            node[internal] = np.where(go_left, self.left[node[internal]], self.right[node[internal]])
        return self.value[node].astype(np.float64)


def _leaf_value(y):
    return float(y[0]) if np.all(y == y[0]) else float(np.mean(y))


def _best_split(x_node, y_node, candidates, min_leaf):
    """
    Exhaustive search over the candidate features for the split minimizing the summed squared error.

    Returns:
        (feature, threshold) or None when no split leaves `min_leaf` samples on both sides
    """
    n = len(y_node)
    if n < 2 * min_leaf:
        return None
    xs = x_node[:, candidates]
    order = np.argsort(xs, axis=0, kind="stable")
    xs = np.take_along_axis(xs, order, axis=0)
    ys = (y_node - y_node.mean())[order]
    cs = np.cumsum(ys, axis=0)[:-1]
    cs2 = np.cumsum(ys * ys, axis=0)[:-1]
    tot = ys.sum(axis=0)
    tot2 = (ys * ys).sum(axis=0)
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    sse = (cs2 - cs * cs / n_left) + ((tot2 - cs2) - (tot - cs) ** 2 / (n - n_left))
    valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
    if not valid.any():
        return None
    sse = np.where(valid, sse, np.inf)
    i, j = np.unravel_index(np.argmin(sse), sse.shape)
    lo, hi = xs[i, j], xs[i + 1, j]
    threshold = lo + (hi - lo) / 2.0
    if not lo <= threshold < hi:
        threshold = lo
    return int(candidates[j]), float(threshold)


def fit_tree(features, targets, max_depth, min_leaf, n_candidates, rng) -> TreeModel:
    """
    Grows a regression tree depth-first; `n_candidates` features are drawn without replacement at every node.
    """
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    d = features.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(idx, depth):
        node = len(feature)
        feature.append(LEAF)
        threshold.append(np.nan)
        left.append(LEAF)
        right.append(LEAF)
        y = targets[idx]
        value.append(_leaf_value(y))
        if depth >= max_depth or np.all(y == y[0]):
            return node
        candidates = np.sort(rng.choice(d, size=n_candidates, replace=False))
        best = _best_split(features[idx], y, candidates, min_leaf)
        if best is None:
            return node
        f, t = best
        go_left = features[idx, f] <= t
        feature[node] = f
        threshold[node] = t
        left[node] = grow(idx[go_left], depth + 1)
        right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(len(targets)), 0)
    return TreeModel(feature=np.array(feature, dtype=np.int64),
                     threshold=np.array(threshold, dtype=np.float64),
                     left=np.array(left, dtype=np.int64),
                     right=np.array(right, dtype=np.int64),
                     value=np.array(value, dtype=np.float64),
                     n_features=d)


# RANDOM FOREST: ====================================================


@dataclass(frozen=True, eq=False)
class ForestModel:
    """
    Bagged committee of regression trees predicting log-consumption.

    Args:
        trees (tuple): the T fitted `TreeModel`s
        trained_on (np.ndarray): canonical (ascending) ids of the training set
        seed (int): seed the per-tree streams were derived from
        target_space (str): always "log_consumption"
    """
    trees: Tuple[TreeModel, ...]
    trained_on: np.ndarray = field(repr=False)
    seed: int = 0
    target_space: str = "log_consumption"

    def __post_init__(self):
        if len(self.trees) < 2:
            raise ConfigError("a forest needs at least 2 trees")
        widths = {t.n_features for t in self.trees}
        if len(widths) != 1:
            raise ShapeError(f"trees disagree on the feature width: {sorted(widths)}")

    @property
    def n_features(self):
        return self.trees[0].n_features

    @property
    def n_trees(self):
        return len(self.trees)


def fit_forest(dataset: Dataset, hyperparams: ForestHyperparams = ForestHyperparams(), seed: int = 0) -> ForestModel:
    """
    Fits a random forest regressor on log(consumption).

    The training set is first put in canonical order (ascending id), so the model only depends on the id set,
    the hyperparameters and `seed`. Tree `t` draws its bootstrap resample (with replacement, same size) and
    its per-node feature subsets from a stream derived from `(seed, t)`.

    Raises:
        TrainingError: fewer than `hyperparams.min_train_size` points
    """
    train = dataset.canonical()
    if train.n < hyperparams.min_train_size:
        raise TrainingError(f"cannot fit a forest on {train.n} points (minimum {hyperparams.min_train_size})")
    features, targets = train.features, train.log_consumption
    n, d = features.shape
    m = hyperparams.candidates(d)
    trees = []
    for t in range(hyperparams.n_trees):
        rng = make_rng(seed, t)
        idx = rng.integers(0, n, size=n)
        trees.append(fit_tree(features[idx], targets[idx], hyperparams.max_depth, hyperparams.min_leaf, m, rng))
    return ForestModel(trees=tuple(trees), trained_on=train.ids.copy(), seed=seed)


def per_tree_predictions(model: ForestModel, features) -> np.ndarray:
    """
    Returns:
        np.ndarray: T x n matrix, row t holds tree t's predictions
    """
    features = _check_width(features, model.n_features)
    return np.vstack([tree.predict(features) for tree in model.trees])


def predict_forest(model: ForestModel, features) -> np.ndarray:
    return per_tree_predictions(model, features).mean(axis=0)


# LOGISTIC CLASSIFIER: ==============================================


@dataclass(frozen=True)
class LogisticConfig:
    """
    Args:
        l2 (float): L2 penalty on the coefficients (not on the intercept)
        step (float): gradient descent step size
        max_iter (int): maximum number of gradient steps
        tol (float): stop when the gradient norm falls below this value
    """
    l2: float = cfg.LOGISTIC_L2
    step: float = cfg.LOGISTIC_STEP
    max_iter: int = cfg.LOGISTIC_MAX_ITER
    tol: float = cfg.LOGISTIC_TOL

    def __post_init__(self):
        if self.l2 < 0 or self.step <= 0 or self.max_iter < 1 or self.tol < 0:
            raise ConfigError(f"invalid logistic configuration {self}")


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """
    Logistic classifier of the poor / not-poor label on standardized features.

    `P(poor | x) = sigmoid(((x - mean) / scale) @ coef + intercept)`. Zero-variance training features
    have `scale == 1` and a zero coefficient.
    """
    coef: np.ndarray
    intercept: float
    mean: np.ndarray
    scale: np.ndarray
    loss_history: Tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        assert np.all(np.isfinite(self.coef)) and np.isfinite(self.intercept), "non-finite logistic coefficients"
        assert np.all(np.asarray(self.scale) > 0), "standardization scale must be positive"

    @property
    def n_features(self):
        return len(self.mean)


def logistic_loss(coef, intercept, standardized, labels, l2):
    """Mean log-loss plus `l2 / 2 * ||coef||^2` (torch, differentiable)."""
    logits = standardized @ coef + intercept
    return F.binary_cross_entropy_with_logits(logits, labels) + 0.5 * l2 * (coef * coef).sum()


def fit_logistic(dataset: Dataset, threshold: PovertyThreshold = PovertyThreshold(), config: LogisticConfig = LogisticConfig()) -> LogisticModel:
    """
    Fits the poor / not-poor classifier by full-batch gradient descent on the L2-penalized log-loss.

    Features are standardized with the training mean and (population) standard deviation; zero-variance
    features are dropped. Steps use `config.step`; a step that would increase the loss is halved until it
    does not, so the loss is non-increasing across iterations.

    Raises:
        TrainingError: fewer than 2 points
        DegenerateLabels: all training labels are in the same class
    """
    train = dataset.canonical()
    if train.n < 2:
        raise TrainingError(f"cannot fit a logistic classifier on {train.n} points")
    labels = poverty_labels(train.consumption, threshold)
    if labels.all() or not labels.any():
        raise DegenerateLabels(f"all {train.n} training labels are {'poor' if labels.all() else 'not poor'}")

    features = train.features
    mean = features.mean(axis=0)
    sd = features.std(axis=0)
    kept = sd > 0
    scale = np.where(kept, sd, 1.0)
    z = as_tensor(((features - mean) / scale)[:, kept])
    y = as_tensor(labels.astype(np.float64))
    w = torch.zeros(int(kept.sum()), dtype=torch.float64)
    b = torch.zeros((), dtype=torch.float64)

    def objective(w_, b_):
        return logistic_loss(w_, b_, z, y, config.l2)

    step = config.step
    history = []
    for it in range(config.max_iter):
        loss, grads = value_and_grad(objective, w, b)
        history.append(loss)
        if grad_norm(grads) < config.tol:
            break
        with torch.no_grad():
            while True:
                w_new, b_new = w - step * grads[0], b - step * grads[1]
                new_loss = float(objective(w_new, b_new))
                if new_loss <= loss or step < 1e-12:
                    break
                step /= 2.0
                logging.debug(f"logistic: loss increased at iteration {it}, step halved to {step}")
        if new_loss > loss:
            break
        w, b = w_new, b_new
    assert all(b_ <= a_ for a_, b_ in zip(history, history[1:])), "logistic loss increased during training"

    coef = np.zeros(features.shape[1])
    coef[kept] = detach(w)
    return LogisticModel(coef=coef, intercept=float(b), mean=mean, scale=scale, loss_history=tuple(history))


def predict_proba(model: LogisticModel, features) -> np.ndarray:
    """
    Returns:
        np.ndarray: probability of the "poor" class for each row
    """
    features = _check_width(features, model.n_features)
    z = as_tensor((features - model.mean) / model.scale)
    with torch.no_grad():
        p = torch.sigmoid(z @ as_tensor(model.coef) + model.intercept)
    return detach(p)


# PCA: ==============================================================


@dataclass(frozen=True, eq=False)
class PcaTransform:
    """
    Projection onto the top-k principal axes.

    Args:
        components (np.ndarray): k x d, orthonormal rows in decreasing eigenvalue order
        means (np.ndarray): feature means, length d
        explained_variance (np.ndarray): eigenvalue of each component
    """
    components: np.ndarray
    means: np.ndarray
    explained_variance: np.ndarray

    @property
    def k(self):
        return self.components.shape[0]

    @property
    def n_features(self):
        return self.components.shape[1]


def fit_pca(data: Union[Dataset, np.ndarray], k: int) -> PcaTransform:
    """
    Top-k eigenvectors of the feature covariance matrix.

    Each component's sign is fixed so that its largest-magnitude entry is positive.
    """
    features = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    n, d = features.shape
    if not 1 <= k <= d:
        raise ConfigError(f"PCA needs 1 <= k <= d, got k={k}, d={d}")
    if n < 2:
        raise ConfigError(f"PCA needs at least 2 points, got {n}")
    means = features.mean(axis=0)
    centered = features - means
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(-eigvals, kind="stable")[:k]
    components = eigvecs[:, order].T.copy()
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(k), pivots])
    components *= signs[:, None]
    return PcaTransform(components=components, means=means, explained_variance=np.clip(eigvals[order], 0.0, None))


def transform_pca(t: PcaTransform, features) -> np.ndarray:
    features = _check_width(features, t.n_features)
    return (features - t.means) @ t.components.T


# DEPTH CROSS-VALIDATION: ===========================================


def cross_validate_depth(dataset: Dataset, depth_grid: Sequence[int], folds: int = cfg.CV_FOLDS, seed: int = 0,
                         hyperparams: ForestHyperparams = ForestHyperparams()) -> int:
    """
    K-fold cross-validation of the forest's max_depth on log-consumption MSE.

    Returns:
        int: the depth with the smallest mean validation MSE, ties broken toward the smallest depth
    """
    if len(depth_grid) == 0:
        raise ConfigError("cross-validation needs a non-empty depth grid")
    train = dataset.canonical()
    if folds < 2 or train.n < folds:
        raise ConfigError(f"cannot run {folds}-fold cross-validation on {train.n} points")
    splitter = KFold(n_splits=folds, shuffle=True, random_state=seed % (2 ** 32))
    splits = list(splitter.split(train.ids))
    best_depth, best_score = None, np.inf
    for depth in sorted(set(int(g) for g in depth_grid)):
        params = replace(hyperparams, max_depth=depth)
        scores = []
        for tr, va in splits:
            model = fit_forest(train.subset(train.ids[tr]), params, seed)
            held_out = train.subset(train.ids[va])
            scores.append(float(np.mean((predict_forest(model, held_out.features) - held_out.log_consumption) ** 2)))
        score = float(np.mean(scores))
        logging.debug(f"cv depth {depth}: mean validation mse {score}")
        if score < best_score:
            best_depth, best_score = depth, score
    return best_depth
