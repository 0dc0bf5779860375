"""Rank and correlation statistics for comparing influence estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ParameterError, ShapeError


def _paired(xs, ys) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"paired samples disagree on length: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise DegenerateInputError("correlation needs at least 2 pairs")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DegenerateInputError("correlation inputs must be finite")
    return x, y


def pearson_r(xs, ys) -> float:
    """Pearson correlation; zero variance on either side is degenerate."""
    x, y = _paired(xs, ys)
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float(xc @ xc)
    vy = float(yc @ yc)
    if vx == 0.0 or vy == 0.0:
        raise DegenerateInputError("correlation is undefined for a constant sample")
    return float(np.clip((xc @ yc) / math.sqrt(vx * vy), -1.0, 1.0))


def average_ranks(xs) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    order = np.argsort(x, kind="stable")
    _, inverse, counts = np.unique(x[order], return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts
    avg = (starts + ends + 1) / 2.0  # mean of 1-based positions start+1 .. end
    ranks = np.empty(x.size)
    ranks[order] = avg[inverse]
    return ranks


def spearman_rho(xs, ys) -> float:
    """Spearman correlation: Pearson on average ranks."""
    x, y = _paired(xs, ys)
    return pearson_r(average_ranks(x), average_ranks(y))


@dataclass(frozen=True)
class CorrelationSummary:
    """Pearson and Spearman agreement over n_pairs paired values.

    Degenerate inputs (constant on either side) surface as NaN with the
    degenerate flag set rather than as an exception.
    """

    pearson: float
    spearman: float
    n_pairs: int
    degenerate: bool = False


def correlation_summary(xs, ys) -> CorrelationSummary:
    """Both correlations at once, tolerating degenerate inputs."""
    x, y = _paired(xs, ys)
    try:
        return CorrelationSummary(pearson_r(x, y), spearman_rho(x, y), x.size)
    except DegenerateInputError:
        return CorrelationSummary(math.nan, math.nan, x.size, degenerate=True)


def top_k_by_magnitude(records, k: int) -> list:
    """The k records largest by |i_ntk|; ties keep the earlier record.

    Works on any sequence whose items expose an i_ntk attribute.
    """
    items = list(records)
    if not 1 <= k <= len(items):
        raise ParameterError(f"k must lie in [1, {len(items)}], got {k!r}")
    magnitudes = np.array([abs(r.i_ntk) for r in items])
    order = np.argsort(-magnitudes, kind="stable")
    return [items[i] for i in order[:k]]
