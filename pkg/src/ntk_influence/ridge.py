"""Kernel ridge regression with exact rank-one leave-one-out updates.

Fitting caches M = (K + lam*I)^-1. For any test point,
    f(x) = k_te . beta            with beta = M y,
and deleting training point i needs no refit:
    f^(-i)(x) = k_te . (M - m_i m_i^T / M_ii) y,
which reproduces a from-scratch fit on the remaining n-1 points exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import (
    ConditioningError,
    DegenerateRemovalError,
    ParameterError,
    ShapeError,
)
from .kernel import KernelCross, KernelMatrix, jitter_for


@dataclass(frozen=True)
class RidgeModel:
    """Fitted kernel ridge regressor.

    beta solves (K + lam*I) beta = y; inv is the cached resolvent inverse;
    jitter is the diagonal shift actually applied (nonzero only for
    ridgeless fits on a rank-deficient kernel).
    """

    kernel: KernelMatrix
    labels: np.ndarray
    lam: float
    beta: np.ndarray
    inv: np.ndarray
    jitter: float = 0.0

    def __post_init__(self):
        for arr in (self.labels, self.beta, self.inv):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def fitted_values(self) -> np.ndarray:
        """In-sample predictions f(x_i) = (K beta)_i."""
        return self.kernel.values @ self.beta

    def alpha(self, cross: KernelCross) -> np.ndarray:
        """Per-point weights alpha_i = k_te . M e_i for a test point."""
        _check_cross(self, cross)
        return self.inv @ cross.values

    def a_values(self) -> np.ndarray:
        """Self-influence A_i = e_i . K M e_i, in [0, 1) for lam > 0."""
        return np.einsum("ij,ij->i", self.kernel.values, self.inv)


def _check_cross(model: RidgeModel, cross: KernelCross) -> None:
    if cross.values.shape[0] != model.n:
        raise ShapeError(
            f"cross block has {cross.values.shape[0]} entries, model has n={model.n}"
        )


def fit(kernel: KernelMatrix, labels, lam: float) -> RidgeModel:
    """Solve (K + lam*I) beta = y through a Cholesky factorization.

    lam may be 0 only in effect: rank-deficient kernels get the standard
    diagonal jitter so the solve stays well-posed.
    """
    y = np.asarray(labels, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != kernel.n:
        raise ShapeError(f"labels must have shape ({kernel.n},), got {y.shape}")
    lam = float(lam)
    if lam < 0:
        raise ParameterError(f"regularization must be nonnegative, got {lam!r}")
    jitter = jitter_for(kernel) if lam == 0.0 else 0.0
    a = kernel.values + (lam + jitter) * np.eye(kernel.n)
    try:
        cho = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise ConditioningError(
            f"K + {lam + jitter:g}*I is not positive definite",
            lambda_min=kernel.lambda_min + lam + jitter,
        ) from exc
    inv = scipy.linalg.cho_solve(cho, np.eye(kernel.n), check_finite=False)
    inv = 0.5 * (inv + inv.T)
    diag = np.diagonal(inv)
    if np.any(diag <= 0):
        raise ConditioningError(
            "resolvent inverse lost positive definiteness", lambda_min=float(diag.min())
        )
    return RidgeModel(kernel, y, lam, inv @ y, inv, jitter)


def predict(model: RidgeModel, cross: KernelCross) -> float:
    """Prediction at the test point behind the cross block."""
    _check_cross(model, cross)
    return float(cross.values @ model.beta)


def loo_residual(model: RidgeModel, i: int) -> float:
    """Leave-one-out residual f^(-i)(x_i) - y_i = -beta_i / M_ii."""
    _check_index(model, i)
    return float(-model.beta[i] / model.inv[i, i])


def loo_predict(model: RidgeModel, cross: KernelCross, i: int) -> float:
    """Prediction at the test point after deleting training point i, no refit.

    Uses the rank-one identity: the deflated inverse M - m_i m_i^T / M_ii
    has zero i-th row and column and agrees with the inverse of the
    (n-1)-point system elsewhere.
    """
    _check_cross(model, cross)
    _check_index(model, i)
    alpha_i = float(cross.values @ model.inv[:, i])
    return predict(model, cross) + alpha_i * loo_residual(model, i)


def loo_residuals(model: RidgeModel) -> np.ndarray:
    """All n leave-one-out residuals at once."""
    if model.n < 2:
        raise DegenerateRemovalError("leave-one-out needs at least 2 training points")
    return -model.beta / np.diagonal(model.inv)


def _check_index(model: RidgeModel, i: int) -> None:
    if model.n < 2:
        raise DegenerateRemovalError("leave-one-out needs at least 2 training points")
    if not 0 <= i < model.n:
        raise IndexError(f"training index {i} out of range for n={model.n}")


def _kernel_digest(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype="<f8").tobytes()).hexdigest()


def save_model(path: str | Path, model: RidgeModel) -> None:
    """Persist lam, beta, labels, and a digest of the kernel (not the kernel itself)."""
    payload = {
        "lam": model.lam,
        "jitter": model.jitter,
        "beta": model.beta.tolist(),
        "labels": model.labels.tolist(),
        "kernel_sha256": _kernel_digest(model.kernel.values),
    }
    Path(path).write_text(json.dumps(payload))


def load_model(path: str | Path, kernel: KernelMatrix) -> RidgeModel:
    """Rebuild a saved model against the kernel it was fitted on.

    The stored digest must match the supplied kernel; the inverse is
    recomputed rather than stored.
    """
    payload = json.loads(Path(path).read_text())
    if payload["kernel_sha256"] != _kernel_digest(kernel.values):
        raise ParameterError("kernel digest mismatch: this model was fit on different data")
    model = fit(kernel, np.asarray(payload["labels"]), payload["lam"])
    if not np.allclose(model.beta, payload["beta"], rtol=1e-10, atol=1e-12):
        raise ConditioningError("refit coefficients disagree with the stored model")
    return model
