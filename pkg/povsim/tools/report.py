# standard library imports
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

# third-party imports
import pandas as pd

# local imports
import povsim.config.config_constants as cfg
from povsim.simulation import RunRecord


__docformat__ = "google"


@dataclass(frozen=True)
class StrategySummary:
    """
    Args:
        strategy (str): strategy name
        final_budget (int): largest budget of the strategy's runs
        repetitions (int): number of repetitions at the final budget
        final_means (dict): mean of each metric over repetitions at the final budget (None if all missing)
        final_missing (dict): number of missing values of each metric at the final budget
        budget_to_fraction (int): first budget at which the mean Spearman curve reaches `fraction` of its final value
        fraction (float): the fraction used for `budget_to_fraction`
    """
    strategy: str
    final_budget: int
    repetitions: int
    final_means: Dict[str, Optional[float]]
    final_missing: Dict[str, int]
    budget_to_fraction: Optional[int]
    fraction: float


def runs_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    return pd.DataFrame([{"strategy": r.strategy, "repetition": r.repetition, "budget": r.budget, **r.metrics.as_dict()}
                         for r in records], columns=["strategy", "repetition", "budget", *cfg.METRIC_NAMES]).astype(
                             {m: "float64" for m in cfg.METRIC_NAMES})


def summarize_runs(records: Sequence[RunRecord], fraction: float = cfg.REPORT_FRACTION) -> List[StrategySummary]:
    """
    Per-strategy final-budget metrics and the budget at which the mean Spearman curve first reaches
    `fraction` of its final-budget value (None when that value is missing or not positive).
    """
    frame = runs_frame(records)
    order = {name: i for i, name in enumerate(cfg.STRATEGY_NAMES)}
    summaries = []
    for strategy in sorted(frame["strategy"].unique(), key=lambda s: (order.get(s, len(order)), s)):
        runs = frame[frame["strategy"] == strategy]
        final_budget = int(runs["budget"].max())
        final = runs[runs["budget"] == final_budget]
        means = final[list(cfg.METRIC_NAMES)].mean(skipna=True)
        missing = final[list(cfg.METRIC_NAMES)].isna().sum()
        curve = runs.groupby("budget")["spearman"].mean().sort_index()
        target = curve.iloc[-1]
        reached = None
        if pd.notna(target) and target > 0:
            hits = curve[curve >= fraction * target]
            reached = int(hits.index[0])
        summaries.append(StrategySummary(strategy=strategy,
                                         final_budget=final_budget,
                                         repetitions=len(final),
                                         final_means={m: (None if pd.isna(means[m]) else float(means[m])) for m in cfg.METRIC_NAMES},
                                         final_missing={m: int(missing[m]) for m in cfg.METRIC_NAMES},
                                         budget_to_fraction=reached,
                                         fraction=fraction))
    return summaries


def format_report(summaries: Sequence[StrategySummary]) -> str:
    blocks = []
    for s in summaries:
        lines = [f"=== {s.strategy} ".ljust(60, '='),
                 f"  final budget: {s.final_budget} ({s.repetitions} repetitions)"]
        for m in cfg.METRIC_NAMES:
            mean = "missing" if s.final_means[m] is None else f"{s.final_means[m]:.6f}"
            lines.append(f"  {m:<20} {mean:>12}   missing: {s.final_missing[m]}")
        reached = "n/a" if s.budget_to_fraction is None else str(s.budget_to_fraction)
        lines.append(f"  budget to {s.fraction:.0%} of final spearman: {reached}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
