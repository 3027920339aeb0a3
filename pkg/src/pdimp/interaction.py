"""Pairwise interaction strength from partial dependence functions.

If two features do not interact, the importance of one computed inside
each slice of the joint partial dependence is the same no matter where
the other is held: slices only shift vertically. The statistic here is
the spread of those conditional importances, averaged over both
directions. Friedman's H-statistic is provided alongside for comparison;
it contrasts the joint PD with the sum of the marginal PDs at the
training points.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset
from .engine import (
    Grid,
    GridStrategy,
    build_grid,
    joint_partial_dependence,
    ordered_mean,
    pd_values_at,
)
from .errors import DegenerateGridError, ParameterError
from .importance import RANGE_OVER_4, SAMPLE_SD, sample_sd, spread
from .models import PredictionModel


@dataclass(frozen=True)
class PairStatistics:
    features: tuple[str, str]
    stat_pd: float
    spread_first_given_second: float
    spread_second_given_first: float
    stat_h: float | None = None


@dataclass(frozen=True)
class InteractionReport:
    """Per-pair statistics, sorted descending by the PD-based statistic."""

    pairs: tuple[PairStatistics, ...]
    grid_strategy: str

    def ranked_pairs(self) -> list[tuple[str, str]]:
        return [p.features for p in self.pairs]

    def stat_for(self, a: str, b: str) -> PairStatistics:
        wanted = frozenset((a, b))
        for pair in self.pairs:
            if frozenset(pair.features) == wanted:
                return pair
        raise KeyError((a, b))

    def to_csv(self, target) -> None:
        if isinstance(target, (str, Path)):
            with open(target, "w", encoding="utf-8", newline="") as fh:
                self.to_csv(fh)
            return
        writer = csv.writer(target, lineterminator="\n")
        writer.writerow(["feature_i", "feature_j", "stat_pd", "stat_h"])
        for pair in self.pairs:
            h = "" if pair.stat_h is None or math.isnan(pair.stat_h) else repr(pair.stat_h)
            writer.writerow([pair.features[0], pair.features[1], repr(pair.stat_pd), h])

    def to_json_dict(self) -> dict:
        def encode_h(h):
            return None if h is None or math.isnan(h) else h

        return {
            "grid_strategy": self.grid_strategy,
            "pairs": [
                {
                    "features": list(p.features),
                    "stat_pd": p.stat_pd,
                    "stat_h": encode_h(p.stat_h),
                    "components": {
                        f"{p.features[0]}|{p.features[1]}": p.spread_first_given_second,
                        f"{p.features[1]}|{p.features[0]}": p.spread_second_given_first,
                    },
                }
                for p in self.pairs
            ],
        }

    def to_json(self, target) -> None:
        if isinstance(target, (str, Path)):
            with open(target, "w", encoding="utf-8") as fh:
                self.to_json(fh)
            return
        json.dump(self.to_json_dict(), target, indent=2)
        target.write("\n")

    def to_text(self, top: int | None = None) -> str:
        rows = self.pairs if top is None else self.pairs[:top]
        lines = [f"{'pair':24}  {'stat_pd':>14}  {'stat_h':>10}"]
        for p in rows:
            h = "" if p.stat_h is None or math.isnan(p.stat_h) else f"{p.stat_h:10.6f}"
            lines.append(f"{p.features[0] + ' * ' + p.features[1]:24}  {p.stat_pd:14.8g}  {h}")
        return "\n".join(lines)


def _directional_spreads(values: np.ndarray, kinds: tuple[str, str]) -> tuple[float, float]:
    """Spread of conditional importances in each direction of a joint PD table."""
    k_i, k_j = values.shape
    if k_i < 2 or k_j < 2:
        raise DegenerateGridError("interaction needs at least 2 grid points per feature")
    measure_i = RANGE_OVER_4 if kinds[0] == "categorical" else SAMPLE_SD
    measure_j = RANGE_OVER_4 if kinds[1] == "categorical" else SAMPLE_SD
    cond_i = np.array([spread(values[:, j], measure_i) for j in range(k_j)])
    cond_j = np.array([spread(values[i, :], measure_j) for i in range(k_i)])
    return sample_sd(cond_i), sample_sd(cond_j)


def joint_sd(values: np.ndarray) -> float:
    """Plain sd of all joint PD values; a diagnostic, not the pair statistic."""
    return sample_sd(values.reshape(-1))


def pd_interaction(model: PredictionModel, dataset: Dataset, pair: Sequence[str],
                   grid_strategy: GridStrategy | None = None,
                   workers: int = 1) -> float:
    """Interaction statistic for one unordered feature pair.

    Builds the joint PD once, computes the importance of each feature
    conditional on every grid value of the other, takes the sd of those
    conditional importances per direction, and averages the two.
    """
    stat = _pair_statistics(model, dataset, tuple(pair), grid_strategy, workers)
    return stat.stat_pd


def _pair_statistics(model, dataset, pair, grid_strategy, workers) -> PairStatistics:
    if grid_strategy is None:
        grid_strategy = GridStrategy.quantile(10)
    a, b = pair
    if a == b:
        raise ParameterError("interaction needs two distinct features")

    def strategy_for(name):
        return grid_strategy if dataset.schema_for(name).is_continuous else GridStrategy.unique()

    axis_a = build_grid(dataset, [a], strategy_for(a)).axes[0]
    axis_b = build_grid(dataset, [b], strategy_for(b)).axes[0]
    grid = Grid((axis_a, axis_b), grid_strategy)
    joint = joint_partial_dependence(model, dataset, grid, workers=workers)
    s_ab, s_ba = _directional_spreads(
        joint.value_matrix(), (axis_a.kind, axis_b.kind)
    )
    return PairStatistics((a, b), (s_ab + s_ba) / 2.0, s_ab, s_ba)


def _snap_codes(column: np.ndarray, grid_values: np.ndarray) -> np.ndarray:
    """Index of the nearest grid value for each training value (ties go low)."""
    pos = np.searchsorted(grid_values, column)
    pos = np.clip(pos, 1, len(grid_values) - 1)
    left = grid_values[pos - 1]
    right = grid_values[pos]
    return np.where(column - left <= right - column, pos - 1, pos)


def _pd_by_row(model, dataset, feature, strategy, workers) -> np.ndarray:
    """Marginal PD evaluated at each training row's own value of ``feature``."""
    feat = dataset.schema_for(feature)
    if feat.is_continuous:
        axis = build_grid(dataset, [feature], strategy).axes[0]
        codes = _snap_codes(dataset.column(feature), axis.values)
        points = [(v,) for v in axis.values.tolist()]
    else:
        codes = dataset.column(feature)
        points = [(int(v),) for v in range(len(feat.levels))]
    values = pd_values_at(model, dataset, [feature], points, workers=workers)
    return values[codes]


def _joint_pd_by_row(model, dataset, pair, strategy, workers) -> np.ndarray:
    """Joint PD at each training row's own (xi, xj) pair, deduplicated."""
    per_feature_codes = []
    per_feature_values = []
    for name in pair:
        feat = dataset.schema_for(name)
        if feat.is_continuous:
            axis = build_grid(dataset, [name], strategy).axes[0]
            per_feature_codes.append(_snap_codes(dataset.column(name), axis.values))
            per_feature_values.append(axis.values)
        else:
            per_feature_codes.append(dataset.column(name))
            per_feature_values.append(np.arange(len(feat.levels)))
    paired = np.column_stack(per_feature_codes)
    distinct, inverse = np.unique(paired, axis=0, return_inverse=True)
    points = [
        (per_feature_values[0][i], per_feature_values[1][j])
        for i, j in distinct.tolist()
    ]
    values = pd_values_at(model, dataset, list(pair), points, workers=workers)
    return values[inverse]


def h_statistic(model: PredictionModel, dataset: Dataset, pair: Sequence[str],
                grid_strategy: GridStrategy | None = None, workers: int = 1,
                _marginal_cache: dict | None = None) -> float:
    """Friedman's H for one pair, evaluated at the training points.

    All three partial dependence functions (joint and both marginals) are
    evaluated at each row's own feature values, mean-centered over the
    rows, and compared:

        H^2 = sum((joint - marg_i - marg_j)^2) / sum(joint^2)

    With a quantile or equidistant strategy, training values snap to the
    nearest grid point first (a cost cap); ``unique`` is exact. Returns
    NaN when the denominator is zero (joint PD centered identically 0).
    """
    a, b = pair
    if a == b:
        raise ParameterError("interaction needs two distinct features")
    if grid_strategy is None:
        grid_strategy = GridStrategy.unique()
    cache = _marginal_cache if _marginal_cache is not None else {}
    for name in (a, b):
        if name not in cache:
            cache[name] = _pd_by_row(model, dataset, name, grid_strategy, workers)
    joint = _joint_pd_by_row(model, dataset, (a, b), grid_strategy, workers)
    f_joint = joint - ordered_mean(joint)
    f_a = cache[a] - ordered_mean(cache[a])
    f_b = cache[b] - ordered_mean(cache[b])
    denom = float(np.sum(f_joint**2))
    if denom == 0.0:
        return math.nan
    num = float(np.sum((f_joint - f_a - f_b) ** 2))
    return math.sqrt(max(num / denom, 0.0))


def interaction_matrix(model: PredictionModel, dataset: Dataset,
                       pairs: Sequence[tuple[str, str]] | None = None,
                       grid_strategy: GridStrategy | None = None,
                       include_h: bool = False, workers: int = 1) -> InteractionReport:
    """Pair statistics for every requested (default: all) unordered pair.

    Pairs fan out over worker threads; each pair's joint PD is computed
    once and reused for both conditional directions.
    """
    if grid_strategy is None:
        grid_strategy = GridStrategy.quantile(10)
    if pairs is None:
        pairs = list(combinations(dataset.feature_names, 2))
    else:
        pairs = [tuple(p) for p in pairs]
        for a, b in pairs:
            dataset.schema_for(a)
            dataset.schema_for(b)

    marginal_cache: dict[str, np.ndarray] = {}
    if include_h:
        # fill serially so pair workers only read
        for name in sorted({f for p in pairs for f in p}):
            marginal_cache[name] = _pd_by_row(model, dataset, name, grid_strategy, 1)

    def compute(pair):
        stat = _pair_statistics(model, dataset, pair, grid_strategy, 1)
        if include_h:
            h = h_statistic(model, dataset, pair, grid_strategy, 1, marginal_cache)
            stat = PairStatistics(
                stat.features, stat.stat_pd,
                stat.spread_first_given_second, stat.spread_second_given_first, h,
            )
        return stat

    if workers <= 1 or len(pairs) <= 1 or not model.concurrency_safe:
        results = [compute(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(compute, pairs))
    ranked = sorted(results, key=lambda s: -s.stat_pd)
    return InteractionReport(tuple(ranked), str(grid_strategy))
