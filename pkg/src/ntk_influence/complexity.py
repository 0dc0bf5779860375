"""Model-complexity contribution of training subsets.

The complexity of a fitted kernel system is the RKHS norm of the
interpolant, sqrt(y^T K^-1 y). A subset's contribution is how much that
norm drops when the subset is deleted and the norm recomputed on the exact
principal submatrix. Grouping points by their influence rank exposes the
U-shape: the most harmful and most helpful points carry the most complexity.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from . import matio
from .errors import ConditioningError, ParameterError, ShapeError
from .kernel import KernelMatrix, jitter_for


def rkhs_norm(kernel: KernelMatrix, labels) -> float:
    """sqrt(y^T (K + jitter I)^-1 y), the norm of the minimum-norm interpolant."""
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != (kernel.n,):
        raise ShapeError(f"labels must have shape ({kernel.n},), got {y.shape}")
    if kernel.n == 0:
        return 0.0
    a = kernel.values + jitter_for(kernel) * np.eye(kernel.n)
    try:
        cho = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise ConditioningError("kernel is singular", lambda_min=kernel.lambda_min) from exc
    z = scipy.linalg.cho_solve(cho, y, check_finite=False)
    return float(np.sqrt(max(y @ z, 0.0)))


def subset_complexity(kernel: KernelMatrix, labels, subset) -> float:
    """Complexity drop from deleting the given training indices.

    C(S) = sqrt(y^T K^-1 y) - sqrt(y_-S^T K_-S^-1 y_-S); the empty subset
    contributes exactly 0.
    """
    y = np.asarray(labels, dtype=np.float64)
    idx = np.unique(np.asarray(subset, dtype=np.int64)) if len(subset) else np.empty(0, np.int64)
    if idx.size and (idx[0] < 0 or idx[-1] >= kernel.n):
        raise IndexError(f"subset indices out of range for n={kernel.n}")
    if idx.size == 0:
        return 0.0
    if idx.size == kernel.n:
        return rkhs_norm(kernel, y)
    keep = np.setdiff1d(np.arange(kernel.n), idx, assume_unique=True)
    return rkhs_norm(kernel, y) - rkhs_norm(kernel.submatrix(keep), y[keep])


@dataclass(frozen=True)
class ComplexityReport:
    """Per-group complexity contributions, groups ordered by influence rank.

    Group 0 collects the most harmful points (lowest influence values),
    the last group the most helpful. sizes partition n; mean_influence is
    each group's average influence; complexity its deletion contribution.
    """

    group_indices: list[np.ndarray]
    sizes: np.ndarray
    mean_influence: np.ndarray
    complexity: np.ndarray
    total: float

    @property
    def n_groups(self) -> int:
        return self.sizes.shape[0]


def group_complexity(
    kernel: KernelMatrix, labels, influences, n_groups: int
) -> ComplexityReport:
    """Split points into influence-ranked groups and score each group's complexity.

    influences are per-training-point values (typically averaged over a test
    set); ranks ascend, so group 0 holds the most negative (harmful) points.
    Group sizes are n // n_groups with the remainder going to the last group.
    """
    y = np.asarray(labels, dtype=np.float64)
    infl = np.asarray(influences, dtype=np.float64)
    n = kernel.n
    if infl.shape != (n,) or y.shape != (n,):
        raise ShapeError(f"labels and influences must have shape ({n},)")
    if not 1 <= n_groups <= n:
        raise ParameterError(f"n_groups must lie in [1, {n}], got {n_groups!r}")
    order = np.argsort(infl, kind="stable")
    base = n // n_groups
    sizes = np.full(n_groups, base, dtype=np.int64)
    sizes[-1] += n - base * n_groups
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    total = rkhs_norm(kernel, y)
    groups, means, scores = [], [], []
    for g in range(n_groups):
        members = order[bounds[g] : bounds[g + 1]]
        groups.append(np.sort(members))
        means.append(float(infl[members].mean()))
        scores.append(subset_complexity(kernel, y, members))
    return ComplexityReport(
        groups, sizes, np.asarray(means), np.asarray(scores), total
    )


def report_to_csv(path: str | Path, report: ComplexityReport) -> None:
    rows = [
        [g, int(report.sizes[g]), float(report.mean_influence[g]), float(report.complexity[g])]
        for g in range(report.n_groups)
    ]
    matio.write_csv(path, ("group", "size", "mean_influence", "complexity"), rows)
