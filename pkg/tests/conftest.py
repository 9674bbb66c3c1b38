# third-party imports
import numpy as np
import pytest

# local imports
from povsim.custom.custom_models import ForestHyperparams
from povsim.dataset import Dataset, GroupId, make_synthetic
from povsim.simulation import SimulationConfig


def make_dataset(features, consumption, group_index=None, labels=None, ids=None):
    """Dataset from raw arrays; every point in group 0 unless `group_index` is given."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    n = features.shape[0]
    group_index = np.zeros(n, dtype=np.int64) if group_index is None else np.asarray(group_index)
    n_groups = int(group_index.max()) + 1 if labels is None else len(labels)
    labels = labels or [f"g{i}" for i in range(n_groups)]
    return Dataset(ids=np.arange(n) if ids is None else ids,
                   group_index=group_index,
                   features=features,
                   consumption=consumption,
                   groups=tuple(GroupId(label, i) for i, label in enumerate(labels)))


@pytest.fixture
def tiny_forest():
    return ForestHyperparams(n_trees=5, max_depth=4, min_leaf=2)


@pytest.fixture
def fast_config(tiny_forest):
    return SimulationConfig(repetitions=2, schedule_points=4, min_budget=20, forest=tiny_forest, bootstrap_samples=200)


@pytest.fixture(scope="session")
def survey():
    """Small synthetic survey: 200 households, 4 features, 3 regions."""
    return make_synthetic(200, 4, 3, noise_sd=0.5, seed=1)[0]
