"""
Scoring runs against gold summaries and assembling benchmark tables.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from src.errors import DataError
from src.eval.metrics import aggregate_turns, compute_prf, macro_aggregate, match_pairs, summary_to_pairs

logger = logging.getLogger(__name__)

POINTS = (("start", "start"), ("last", "last"), ("Avg", "avg"))


@dataclass(frozen=True)
class EntityRunScore:
    entity: str
    strategy: str
    per_turn: tuple
    aggregate: object
    tokens: tuple = ()

    def to_dict(self):
        return {
            "entity": self.entity,
            "strategy": self.strategy,
            "per_turn": [m.to_dict() for m in self.per_turn],
            "aggregate": self.aggregate.to_dict(),
            "memory_tokens": list(self.tokens),
        }


def _gold_for_turns(result, record):
    if record.gold_per_turn and len(record.gold_per_turn) == len(result.turns):
        return list(record.gold_per_turn)
    final = record.final_gold
    if final is None:
        raise DataError(f"Entity '{record.entity}' has no gold summary to evaluate against")
    # single-turn runs (GO) are scored against the gold for the whole stream
    return [final] * len(result.turns)


def evaluate_run(result, record, matcher):
    """
    Scores every turn snapshot of a run against the record's gold.

    Args:
        result (RunResult): Completed run
        record (EntityStreamRecord): Entity with gold_per_turn and/or gold_final
        matcher: Pair matcher

    Returns:
        EntityRunScore: Per-turn metrics, their start/last/avg aggregate and memory tokens
    """
    golds = _gold_for_turns(result, record)
    per_turn = []
    for turn, gold in zip(result.turns, golds):
        match = match_pairs(summary_to_pairs(turn.memory_snapshot), summary_to_pairs(gold), matcher)
        per_turn.append(compute_prf(match))
    return EntityRunScore(
        record.entity,
        result.strategy,
        tuple(per_turn),
        aggregate_turns(per_turn),
        tuple(t.memory_tokens for t in result.turns),
    )


def per_turn_mean(series, field="f1"):
    """
    Mean of a per-turn quantity across entities; entities with fewer turns are skipped at later turns.

    Args:
        series (list[list]): One list per entity, of EntityMetrics or numbers
        field (str): Metric attribute to read when entries are EntityMetrics

    Returns:
        list[float]: One value per turn index
    """
    if not series:
        return []
    width = max(len(s) for s in series)
    grid = np.full((len(series), width), np.nan)
    for row, values in enumerate(series):
        for col, value in enumerate(values):
            grid[row, col] = getattr(value, field, value)
    return [float(v) for v in np.nanmean(grid, axis=0)]


def build_benchmark_table(scores_by_strategy):
    """
    Builds the benchmark table: one block per strategy with start / last / Avg rows.

    Args:
        scores_by_strategy (dict): Strategy name -> list of EntityRunScore

    Returns:
        pd.DataFrame: Columns Strategy, Point, P, R, F1 in percent with one decimal
    """
    rows = []
    for strategy, scores in scores_by_strategy.items():
        macro = macro_aggregate(score.aggregate for score in scores)
        for label, attribute in POINTS:
            metrics = getattr(macro, attribute)
            rows.append({
                "Strategy": strategy,
                "Point": label,
                "P": round(100 * metrics.precision, 1),
                "R": round(100 * metrics.recall, 1),
                "F1": round(100 * metrics.f1, 1),
            })
    return pd.DataFrame(rows, columns=["Strategy", "Point", "P", "R", "F1"])


def turn_table(score):
    """Per-turn P/R/F1 of one entity run as a DataFrame (percent, one decimal)."""
    return pd.DataFrame([
        {
            "Turn": index,
            "P": round(100 * m.precision, 1),
            "R": round(100 * m.recall, 1),
            "F1": round(100 * m.f1, 1),
        }
        for index, m in enumerate(score.per_turn)
    ], columns=["Turn", "P", "R", "F1"])


def format_table(df):
    return df.to_string(index=False)


def write_table_csv(df, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.1f")
    logger.info("Wrote table to %s", path)
    return path
