"""Aggregation of perturbed contributions and the evaluation metrics built on it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class MeanEstimate:
    vector: np.ndarray
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a mean estimate needs at least one contribution")


@dataclass(frozen=True)
class HittingRateReport:
    k: int
    rate: float
    runs: int
    hits: int


def estimate_mean(contributions) -> MeanEstimate:
    """Coordinate-wise mean of equal-length contribution vectors."""
    if isinstance(contributions, np.ndarray):
        if contributions.ndim != 2:
            raise ValueError("expected a 2-D array of contributions")
        stacked = np.asarray(contributions, dtype=float)
    else:
        rows = [np.asarray(c, dtype=float).ravel() for c in contributions]
        if not rows:
            raise ValueError("cannot estimate a mean from zero contributions")
        dims = {r.shape[0] for r in rows}
        if len(dims) != 1:
            raise ValueError(f"ragged contributions: dimensions {sorted(dims)}")
        stacked = np.vstack(rows)
    if stacked.shape[0] == 0:
        raise ValueError("cannot estimate a mean from zero contributions")
    return MeanEstimate(vector=stacked.mean(axis=0), n=stacked.shape[0])


def mse(estimate, truth) -> float:
    """Mean over coordinates of the squared error."""
    a = np.asarray(estimate, dtype=float).ravel()
    b = np.asarray(truth, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def rank_attributes(scores) -> np.ndarray:
    """Attribute indices by descending score; ties go to the lower index."""
    s = np.asarray(scores, dtype=float)
    return np.lexsort((np.arange(s.size), -s))


def top_k_hitting_rate(ranked_truth: Sequence[int], chosen: Sequence[int], k: int) -> HittingRateReport:
    """Fraction of runs whose chosen attribute is among the first ``k`` of the ranking."""
    ranked = list(ranked_truth)
    d = len(ranked)
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, {d}], got {k}")
    if len(chosen) == 0:
        raise ValueError("need at least one run")
    top = set(ranked[:k])
    hits = sum(1 for c in chosen if c in top)
    return HittingRateReport(k=k, rate=hits / len(chosen), runs=len(chosen), hits=hits)
