# standard library imports
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

# third-party imports
import yaml
from packaging import version

# local imports
import povsim.config.config_constants as cfg
from povsim.custom.custom_models import ForestHyperparams, LogisticConfig
from povsim.dataset import PovertyThreshold
from povsim.errors import ConfigError
from povsim.simulation import SimulationConfig
from povsim.strategies import StrategyKind


__docformat__ = "google"


TOP_LEVEL_KEYS = ("__VERSION__", "dataset", "strategies", "output", "formats", "simulation", "forest", "logistic", "per_strategy")
SYNTHETIC_KEYS = ("n", "d", "groups", "noise_sd", "seed")
SIMULATION_KEYS = ("repetitions", "schedule_points", "min_budget", "split_fraction", "seed", "split_seed", "model_seed",
                   "threshold", "pca_k", "cv_grid", "cv_folds", "resplit", "bootstrap_samples", "confidence", "jobs", "profile")
FOREST_KEYS = ("n_trees", "max_depth", "min_leaf", "max_features", "min_train_size")
LOGISTIC_KEYS = ("l2", "step", "max_iter", "tol")
SECTION_KEYS = ("simulation", "forest", "logistic")

_INT_FIELDS = {"repetitions", "schedule_points", "min_budget", "seed", "split_seed", "model_seed", "pca_k", "cv_folds",
               "bootstrap_samples", "jobs", "n_trees", "max_depth", "min_leaf", "max_features", "min_train_size", "max_iter",
               "n", "d", "groups"}
_BOOL_FIELDS = {"resplit", "profile"}
_NULLABLE_FIELDS = {"pca_k", "cv_grid", "max_features"}


# YAML WITH LINE NUMBERS: ===========================


class _Lines:
    """
    Maps key paths of a YAML document to 1-based line numbers, from the nodes of `yaml.compose`.
    """
    def __init__(self, text):
        self.root = yaml.compose(text, Loader=yaml.SafeLoader)

    def __call__(self, *path):
        node, line = self.root, 1
        for key in path:
            if isinstance(node, yaml.MappingNode):
                for k, v in node.value:
                    if k.value == key:
                        line, node = k.start_mark.line + 1, v
                        break
                else:
                    return line
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                node = node.value[key]
                line = node.start_mark.line + 1
            else:
                return line
        return line


def _check_keys(mapping, allowed, lines, *path):
    if not isinstance(mapping, dict):
        raise ConfigError(f"'{'.'.join(map(str, path))}' must be a mapping", line=lines(*path))
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown field '{'.'.join(map(str, path + (key, )))}', expected one of {', '.join(allowed)}",
                              line=lines(*path, key))


def _typed(key, value, lines, *path):
    name = ".".join(map(str, path))
    if value is None:
        if key in _NULLABLE_FIELDS:
            return None
        raise ConfigError(f"field '{name}' must not be empty", line=lines(*path))
    if key in _BOOL_FIELDS:
        if not isinstance(value, bool):
            raise ConfigError(f"field '{name}' must be true or false, got {value!r}", line=lines(*path))
        return value
    if key == "cv_grid":
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"field '{name}' must be a list of integers, got {value!r}", line=lines(*path))
        return tuple(value)
    if key in _INT_FIELDS:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"field '{name}' must be an integer, got {value!r}", line=lines(*path))
        return value
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"field '{name}' must be a number, got {value!r}", line=lines(*path))
    return float(value)


def _section(raw, allowed, lines, *path):
    if raw is None:
        return {}
    _check_keys(raw, allowed, lines, *path)
    return {k: _typed(k, v, lines, *path, k) for k, v in raw.items()}


# EXPERIMENT CONFIGURATION: =========================


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    d: int
    groups: int
    noise_sd: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Parsed experiment file.

    Args:
        strategies (tuple): strategies to run, in file order
        simulations (dict): resolved `SimulationConfig` of each strategy (global sections + per-strategy overrides)
        csv (Path): dataset file, exclusive with `synthetic`
        synthetic (SyntheticSpec): synthetic dataset parameters, exclusive with `csv`
        output (Path): output directory
        formats (tuple): emission formats, always containing "csv"
    """
    strategies: Tuple[StrategyKind, ...]
    simulations: Dict[StrategyKind, SimulationConfig] = field(repr=False)
    csv: Optional[Path] = None
    synthetic: Optional[SyntheticSpec] = None
    output: Path = Path(cfg.OUTPUT_DIR)
    formats: Tuple[str, ...] = ("csv", )

    def simulation_for(self, kind) -> SimulationConfig:
        return self.simulations[StrategyKind(kind)]

    def with_overrides(self, out=None, jobs=None, seed=None) -> "ExperimentConfig":
        """Applies the command-line flags `--out`, `--jobs` and `--seed`."""
        changes = {}
        if jobs is not None:
            changes["jobs"] = jobs
        if seed is not None:
            changes["seed"] = seed
        try:
            simulations = {k: replace(s, **changes) for k, s in self.simulations.items()}
        except ConfigError as e:
            raise ConfigError(f"command line: {e}")
        return replace(self, simulations=simulations, output=Path(out) if out is not None else self.output)

    def to_dict(self):
        """JSON-serializable snapshot of the resolved configuration."""
        def sim_dict(s):
            d = asdict(s)
            d["strategy"] = s.strategy.value
            d["cv_grid"] = list(s.cv_grid) if s.cv_grid is not None else None
            return d
        return {
            "__VERSION__": cfg.CONFIG_VERSION,
            "dataset": {"csv": str(self.csv)} if self.csv is not None else {"synthetic": asdict(self.synthetic)},
            "strategies": [k.value for k in self.strategies],
            "output": str(self.output),
            "formats": list(self.formats),
            "simulations": {k.value: sim_dict(self.simulations[k]) for k in self.strategies},
        }


def _build(cls, kwargs, lines, path):
    try:
        return cls(**kwargs)
    except ValueError as e:  # ConfigError and ValidationError included
        raise ConfigError(f"field '{'.'.join(path)}': {e}", line=lines(*path))


def _simulation_config(kind, sim, forest, logistic, lines, paths):
    """`paths` maps each section name to the key path it was (last) set at, for error lines."""
    sim = dict(sim)
    if "threshold" in sim:
        sim["threshold"] = _build(PovertyThreshold, {"value": sim["threshold"]}, lines, paths["simulation"] + ("threshold", ))
    sim["forest"] = _build(ForestHyperparams, forest, lines, paths["forest"])
    sim["logistic"] = _build(LogisticConfig, logistic, lines, paths["logistic"])
    return _build(SimulationConfig, dict(strategy=kind, **sim), lines, paths["simulation"])


def parse_config(text: str, base_dir=None) -> ExperimentConfig:
    """
    Parses an experiment file.

    A relative dataset path is resolved against `base_dir` (the directory of the config file).

    Raises:
        ConfigError: anything invalid, with the line of the offending field
    """
    try:
        lines = _Lines(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(e, 'problem', e)}", line=mark.line + 1 if mark is not None else None)
    if not isinstance(raw, dict):
        raise ConfigError("the configuration must be a mapping with at least 'dataset' and 'strategies'", line=1)
    _check_keys(raw, TOP_LEVEL_KEYS, lines)

    if "__VERSION__" in raw:
        v = str(raw["__VERSION__"])
        try:
            ok = version.parse(v) >= version.parse(cfg.__compatibility__)
        except version.InvalidVersion:
            ok = False
        if not ok:
            raise ConfigError(f"field '__VERSION__' ({v}) must be a version >= {cfg.__compatibility__}", line=lines("__VERSION__"))

    # dataset
    if "dataset" not in raw:
        raise ConfigError("missing field 'dataset'", line=1)
    ds = raw["dataset"]
    _check_keys(ds, ("csv", "synthetic"), lines, "dataset")
    if len(ds) != 1:
        raise ConfigError("field 'dataset' needs exactly one of 'csv' or 'synthetic'", line=lines("dataset"))
    csv, synthetic = None, None
    if "csv" in ds:
        if not isinstance(ds["csv"], str) or not ds["csv"]:
            raise ConfigError("field 'dataset.csv' must be a file path", line=lines("dataset", "csv"))
        csv = Path(ds["csv"])
        if not csv.is_absolute() and base_dir is not None:
            csv = Path(base_dir) / csv
    else:
        params = _section(ds["synthetic"], SYNTHETIC_KEYS, lines, "dataset", "synthetic")
        for key in ("n", "d", "groups"):
            if key not in params:
                raise ConfigError(f"missing field 'dataset.synthetic.{key}'", line=lines("dataset", "synthetic"))
        synthetic = SyntheticSpec(**params)

    # strategies
    if "strategies" not in raw:
        raise ConfigError("missing field 'strategies'", line=1)
    names = raw["strategies"]
    if isinstance(names, str):
        names = [names]
    if not isinstance(names, list) or len(names) == 0:
        raise ConfigError("field 'strategies' must be a non-empty list", line=lines("strategies"))
    strategies = []
    for i, name in enumerate(names):
        if name not in cfg.STRATEGY_NAMES:
            raise ConfigError(f"field 'strategies': unknown strategy {name!r}, expected one of {', '.join(cfg.STRATEGY_NAMES)}",
                              line=lines("strategies", i))
        if StrategyKind(name) in strategies:
            raise ConfigError(f"field 'strategies': {name!r} is listed twice", line=lines("strategies", i))
        strategies.append(StrategyKind(name))

    # output
    output = raw.get("output", cfg.OUTPUT_DIR)
    if not isinstance(output, str) or not output:
        raise ConfigError("field 'output' must be a directory path", line=lines("output"))
    formats = raw.get("formats", ["csv"])
    if isinstance(formats, str):
        formats = [formats]
    if not isinstance(formats, list) or any(f not in cfg.FORMATS for f in formats):
        raise ConfigError(f"field 'formats' must be a list drawn from {', '.join(cfg.FORMATS)}", line=lines("formats"))
    formats = tuple(f for f in cfg.FORMATS if f == "csv" or f in formats)

    # simulation sections
    sim = {"jobs": cfg.DEFAULT_JOBS, **_section(raw.get("simulation"), SIMULATION_KEYS, lines, "simulation")}
    forest = _section(raw.get("forest"), FOREST_KEYS, lines, "forest")
    logistic = _section(raw.get("logistic"), LOGISTIC_KEYS, lines, "logistic")
    overrides = raw.get("per_strategy") or {}
    _check_keys(overrides, cfg.STRATEGY_NAMES, lines, "per_strategy")
    for name in overrides:
        if StrategyKind(name) not in strategies:
            logging.warning(f"per_strategy section for {name!r}, which is not in 'strategies', is ignored")

    simulations = {}
    for kind in strategies:
        s_sim, s_forest, s_logistic = dict(sim), dict(forest), dict(logistic)
        paths = {name: (name, ) for name in SECTION_KEYS}
        if kind.value in overrides:
            section = overrides[kind.value] or {}
            _check_keys(section, SECTION_KEYS, lines, "per_strategy", kind.value)
            s_sim.update(_section(section.get("simulation"), SIMULATION_KEYS, lines, "per_strategy", kind.value, "simulation"))
            s_forest.update(_section(section.get("forest"), FOREST_KEYS, lines, "per_strategy", kind.value, "forest"))
            s_logistic.update(_section(section.get("logistic"), LOGISTIC_KEYS, lines, "per_strategy", kind.value, "logistic"))
            paths.update({name: ("per_strategy", kind.value, name) for name in section})
        simulations[kind] = _simulation_config(kind, s_sim, s_forest, s_logistic, lines, paths)

    return ExperimentConfig(strategies=tuple(strategies),
                            simulations=simulations,
                            csv=csv,
                            synthetic=synthetic,
                            output=Path(output),
                            formats=formats)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read configuration file {path}: {e.strerror or e}")
    logging.info(f"loading configuration from {path}")
    return parse_config(text, base_dir=path.parent)
