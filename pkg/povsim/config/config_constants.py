# standard library imports
import os

__compatibility__ = "1.0"
CONFIG_VERSION = "1.0"

# NAMES: =============================================================

# exact strings used in config files and output tables
STRATEGY_NAMES = ("uniform", "qbc", "margin", "accuracy", "mse", "disparity")
METRIC_NAMES = ("spearman", "mse", "auroc", "accuracy", "precision", "recall", "min_group_accuracy", "max_group_mse", "add")

# DATASET: ===========================================================

ID_COLUMN = "id"
GROUP_COLUMN = "group"
TARGET_COLUMN = "consumption"
FEATURE_PREFIX = "f"

POVERTY_LINE = 1.90  # USD/day, "poor" is strictly below
SPLIT_FRACTION = 0.75  # label pool share, the rest is the holdout set

# MODELS: ============================================================

N_TREES = 50
MAX_DEPTH = 10
MIN_LEAF = 5
MIN_TRAIN_SIZE = 10  # smallest acquired set a forest is fitted on

LOGISTIC_L2 = 1e-4
LOGISTIC_STEP = 0.1
LOGISTIC_MAX_ITER = 500
LOGISTIC_TOL = 1e-6  # gradient norm

CV_FOLDS = 3

# STRATEGIES: ========================================================

MARGIN_EPSILON = 1e-6  # floor of margin weights

# SIMULATION: ========================================================

REPETITIONS = 50
SCHEDULE_POINTS = 20
MIN_BUDGET = 50
BOOTSTRAP_SAMPLES = 1000
CONFIDENCE = 0.95
REPORT_FRACTION = 0.95  # fraction of the final spearman reported by `report`

# OUTPUT: ============================================================

OUTPUT_DIR = "results"
RUNS_FILE = "runs.csv"
GROUPS_FILE = "groups.csv"
AGGREGATES_FILE = "aggregates.csv"
AGGREGATES_JSON_FILE = "aggregates.json"
CONFIG_SNAPSHOT_FILE = "config.json"
FORMATS = ("csv", "json")

DEFAULT_JOBS = os.cpu_count() or 1

# CLI exit codes
EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

WANDB_PROJECT = "povsim"
