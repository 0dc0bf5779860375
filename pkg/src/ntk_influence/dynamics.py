"""Closed-form gradient-flow dynamics of the kernel predictor.

Unregularized gradient flow on half the summed squared error gives
    f(x; t) = k_te^T U diag((1 - exp(-(2 t / n) eigs)) / eigs) U^T y,
which is exactly 0 at t = 0 and converges to the ridgeless solution as
t -> inf. Leave-one-out dynamics use the deleted system's own spectrum but
keep the original 2t/n time scaling, so trajectories stay on one clock.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import matio
from .datasets import Dataset
from .errors import ConditioningError, ParameterError, ShapeError
from .kernel import KernelCross, KernelMatrix, cross_many, gram, jitter_for


def spectral_decomposition(kernel: KernelMatrix) -> tuple[np.ndarray, np.ndarray]:
    """(eigenvalues, eigenvectors) with the ridgeless jitter already applied."""
    eigvals, eigvecs = np.linalg.eigh(kernel.values)
    eigvals = eigvals + jitter_for(kernel)
    if eigvals[0] <= 0:
        raise ConditioningError(
            "kernel spectrum is not positive even after jitter", lambda_min=float(eigvals[0])
        )
    return eigvals, eigvecs


def _gain(eigvals: np.ndarray, t: float, n_clock: int) -> np.ndarray:
    # (1 - exp(-2t/n * eig)) / eig; exactly zero at t = 0
    return -np.expm1(-(2.0 * t / n_clock) * eigvals) / eigvals


def predict_at_time(
    kernel: KernelMatrix,
    cross: KernelCross,
    labels,
    t: float,
    n_clock: int | None = None,
    spectrum: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Kernel predictor at the test point after time t of gradient flow.

    n_clock overrides the n in the 2t/n time scaling (used by leave-one-out
    trajectories, which keep the full-sample clock); spectrum short-circuits
    the eigendecomposition when the caller already has it.
    """
    if t < 0:
        raise ParameterError(f"time must be nonnegative, got {t!r}")
    y = np.asarray(labels, dtype=np.float64)
    if y.shape[0] != kernel.n or cross.values.shape[0] != kernel.n:
        raise ShapeError("kernel, cross block, and labels disagree on n")
    eigvals, eigvecs = spectrum if spectrum is not None else spectral_decomposition(kernel)
    n_clock = kernel.n if n_clock is None else int(n_clock)
    coeff = _gain(eigvals, float(t), n_clock) * (eigvecs.T @ y)
    return float((cross.values @ eigvecs) @ coeff)


def influence_at_time(
    kernel: KernelMatrix,
    cross: KernelCross,
    labels,
    t: float,
    i: int,
    y_test: float,
) -> float:
    """Exact influence of training point i on the test loss at training time t.

    The deleted trajectory is the gradient flow of the (n-1)-point system,
    run on the original n-point clock.
    """
    y = np.asarray(labels, dtype=np.float64)
    n = kernel.n
    if not 0 <= i < n:
        raise IndexError(f"training index {i} out of range for n={n}")
    keep = np.concatenate([np.arange(i), np.arange(i + 1, n)])
    sub_kernel = kernel.submatrix(keep)
    sub_cross = KernelCross(cross.values[keep], cross.test_point)
    f_full = predict_at_time(kernel, cross, y, t)
    f_loo = predict_at_time(sub_kernel, sub_cross, y[keep], t, n_clock=n)
    y_te = float(y_test)
    return 0.5 * (f_loo - y_te) ** 2 - 0.5 * (f_full - y_te) ** 2


@dataclass(frozen=True)
class DynamicsTrace:
    """Most-influential training point per (time, test point) over a time grid.

    noise_fraction[t] is the share of test points whose top influencer at
    time t carries a flipped label; None when the dataset has no noise
    provenance.
    """

    times: np.ndarray
    top_influencer: np.ndarray
    top_influence: np.ndarray
    predictions: np.ndarray
    noise_fraction: np.ndarray | None

    def __post_init__(self):
        for arr in (self.times, self.top_influencer, self.top_influence, self.predictions):
            arr.setflags(write=False)
        if self.noise_fraction is not None:
            self.noise_fraction.setflags(write=False)


def track_top_influencers(
    data: Dataset, test_inputs, test_labels, times
) -> DynamicsTrace:
    """Follow each test point's most influential training point across time.

    For every time t and test point, evaluates the exact deletion influence
    of all n training points (each deleted system eigendecomposed once) and
    records the argmax by |influence|; ties break toward the lower index.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0:
        raise ParameterError("times must be a nonempty 1-d grid")
    if np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ParameterError("times must be strictly increasing and nonnegative")
    test_x = np.atleast_2d(np.asarray(test_inputs, dtype=np.float64))
    test_y = np.asarray(test_labels, dtype=np.float64)
    if test_x.shape[0] != test_y.shape[0]:
        raise ShapeError("test inputs and labels disagree on n")
    if test_x.shape[0] == 0:
        raise ParameterError("need at least one test point")
    n, n_test, n_times = data.n, test_x.shape[0], times.size
    kernel = gram(data)
    crosses = cross_many(data, test_x)  # (n_test, n)
    eigvals, eigvecs = spectral_decomposition(kernel)
    # full-model predictions, all times at once
    proj_y = eigvecs.T @ data.labels
    proj_te = crosses @ eigvecs
    gains = _gain(eigvals[None, :], times[:, None], n)  # (n_times, n)
    predictions = np.einsum("tk,ek,k->te", gains, proj_te, proj_y)  # (n_times, n_test)
    # deleted-trajectory predictions per training point
    full_jitter = jitter_for(kernel)
    f_loo = np.empty((n_times, n_test, n))
    for i in range(n):
        keep = np.concatenate([np.arange(i), np.arange(i + 1, n)])
        sub = kernel.values[np.ix_(keep, keep)]
        w_i, u_i = np.linalg.eigh(sub)
        # interlacing keeps submatrix spectra above the full lambda_min, so the
        # full-kernel jitter decision carries over
        w_i = w_i + (full_jitter if w_i[0] < 1e-10 else 0.0)
        if w_i[0] <= 0:
            raise ConditioningError(
                f"deleted system {i} is singular", lambda_min=float(w_i[0])
            )
        proj_y_i = u_i.T @ data.labels[keep]
        proj_te_i = crosses[:, keep] @ u_i
        gains_i = _gain(w_i[None, :], times[:, None], n)
        f_loo[:, :, i] = np.einsum("tk,ek,k->te", gains_i, proj_te_i, proj_y_i)
    resid = predictions - test_y[None, :]
    resid_loo = f_loo - test_y[None, :, None]
    influence = 0.5 * resid_loo**2 - 0.5 * resid[:, :, None] ** 2
    top = np.argmax(np.abs(influence), axis=2)  # first max wins: lowest index on ties
    top_val = np.take_along_axis(influence, top[:, :, None], axis=2)[:, :, 0]
    noise = None
    if data.clean_labels is not None:
        flipped = data.labels != data.clean_labels
        noise = flipped[top].mean(axis=1)
    return DynamicsTrace(times, top, top_val, predictions, noise)


def trace_to_csv(path: str | Path, trace: DynamicsTrace) -> None:
    """One row per (time, test point): prediction, top influencer, its influence."""
    rows = []
    n_times, n_test = trace.predictions.shape
    for ti in range(n_times):
        for te in range(n_test):
            rows.append(
                [
                    float(trace.times[ti]),
                    te,
                    float(trace.predictions[ti, te]),
                    int(trace.top_influencer[ti, te]),
                    float(trace.top_influence[ti, te]),
                ]
            )
    matio.write_csv(
        path, ("time", "test_id", "prediction", "top_influencer", "top_influence"), rows
    )
