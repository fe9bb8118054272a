"""Correlation statistics and moment helpers."""

from __future__ import annotations

import numpy as np


class DegenerateInput(ValueError):
    """Raised when a statistic is undefined (constant input, too few points)."""


def _check_pair(x: np.ndarray, y: np.ndarray):
    if x.shape != y.shape or x.ndim != 1:
        raise DegenerateInput(f"need equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise DegenerateInput("need at least two points")


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_pair(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        raise DegenerateInput("correlation undefined for a constant vector")
    # rounding can push |r| past 1 on collinear inputs; the true value cannot
    return float(np.clip((xc * yc).sum() / denom, -1.0, 1.0))


def average_ranks(x) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean of their positions."""
    x = np.asarray(x)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_pair(x, y)
    return pearson(average_ranks(x), average_ranks(y))


def kurtosis(x) -> float:
    """Pearson (non-excess) kurtosis m4/m2^2 with biased central moments.

    A normal distribution scores 3; lower values indicate a plateau shape.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise DegenerateInput("need at least two points")
    c = x - x.mean()
    m2 = (c * c).mean()
    if m2 == 0.0:
        raise DegenerateInput("kurtosis undefined for a constant sample")
    m4 = (c ** 4).mean()
    return float(m4 / (m2 * m2))
