"""Latent scores, the x100 index, ranking and cross-period comparison."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .estimation import FitResult
from .model import Dataset, implied_moments

__all__ = [
    "IndexTable",
    "PeriodComparison",
    "factor_scores",
    "scale_index",
    "rank_units",
    "make_index_table",
    "compare_periods",
]


@dataclass(frozen=True)
class IndexTable:
    unit_labels: tuple[str, ...]
    raw_score: np.ndarray
    scaled_index: np.ndarray
    rank: np.ndarray
    period_label: str = ""

    def by_unit(self) -> dict[str, tuple[float, int]]:
        return {u: (float(v), int(r)) for u, v, r in zip(self.unit_labels, self.scaled_index, self.rank)}


def factor_scores(dataset: Dataset, fit: FitResult) -> np.ndarray:
    """Conditional mean of the latent variable given ``(y_n, x_n)``.

    ``E[eta | y, x] = beta'x + sigma^2 lambda' Omega^-1 (y - lambda beta'x)``.
    """
    params = fit.params
    m = implied_moments(fit.spec, params)
    mean_eta = dataset.X @ params.beta
    resid = dataset.Y - np.outer(mean_eta, params.lam)
    weights = params.sigma**2 * np.linalg.solve(m.Omega, params.lam)
    return mean_eta + resid @ weights


def scale_index(raw) -> np.ndarray:
    """``100 * (raw - mean) / sd`` with the population SD (divisor N)."""
    raw = np.asarray(raw, dtype=float)
    sd = raw.std()
    if not sd > 0:
        raise ValueError("scores have zero variance; the index is undefined")
    return 100.0 * (raw - raw.mean()) / sd


def rank_units(unit_labels, scaled_index, raw_score=None, period_label: str = "") -> IndexTable:
    """Rank 1 is the largest index; ties go to the lexicographically smaller label."""
    labels = tuple(str(u) for u in unit_labels)
    idx = np.asarray(scaled_index, dtype=float)
    if idx.size != len(labels):
        raise ValueError("labels and index lengths differ")
    if not np.all(np.isfinite(idx)):
        raise ValueError("index values must be finite")
    if len(set(labels)) != len(labels):
        raise ValueError("unit labels must be unique")
    order = sorted(range(len(labels)), key=lambda i: (-idx[i], labels[i]))
    rank = np.empty(len(labels), dtype=int)
    rank[order] = np.arange(1, len(labels) + 1)
    raw = idx.copy() if raw_score is None else np.asarray(raw_score, dtype=float)
    return IndexTable(labels, raw, idx, rank, period_label)


def make_index_table(dataset: Dataset, fit: FitResult) -> IndexTable:
    raw = factor_scores(dataset, fit)
    return rank_units(dataset.unit_labels, scale_index(raw), raw, dataset.period_label)


@dataclass(frozen=True)
class PeriodComparison:
    unit_labels: tuple[str, ...]
    index_a: np.ndarray
    index_b: np.ndarray
    rank_a: np.ndarray
    rank_b: np.ndarray
    spearman: float
    pearson: float
    period_a: str = ""
    period_b: str = ""


def compare_periods(a: IndexTable, b: IndexTable) -> PeriodComparison:
    """Pair units across two periods and correlate their indices.

    Rows follow the order of ``a``. Spearman uses average ranks for ties.
    """
    sa, sb = set(a.unit_labels), set(b.unit_labels)
    if sa != sb:
        diff = sorted(sa ^ sb)
        raise ValueError(f"unit labels differ between periods: {diff}")
    pos = {u: i for i, u in enumerate(b.unit_labels)}
    j = np.array([pos[u] for u in a.unit_labels])
    ib, rb = b.scaled_index[j], b.rank[j]
    return PeriodComparison(
        unit_labels=a.unit_labels,
        index_a=a.scaled_index,
        index_b=ib,
        rank_a=a.rank,
        rank_b=rb,
        spearman=float(stats.spearmanr(a.scaled_index, ib)[0]),
        pearson=float(stats.pearsonr(a.scaled_index, ib)[0]),
        period_a=a.period_label,
        period_b=b.period_label,
    )
