"""The infinite-width kernel of a two-layer ReLU network, and its finite-width estimate.

For unit vectors x, x' with s = <x, x'> the limiting kernel is
k(x, x') = s * (pi - arccos(s)) / (2*pi), so k(x, x) = 1/2 exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg

from .datasets import NORM_TOL, Dataset
from .errors import ConditioningError, DomainError, EmptyDatasetError, ShapeError

PSD_TOL = 1e-10

# beyond this size dense eigendecomposition of the full spectrum is wasteful;
# only the extreme eigenvalues are needed
_DENSE_EIG_LIMIT = 5000


def _check_unit_rows(x: np.ndarray, name: str) -> np.ndarray:
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    norms = np.linalg.norm(a, axis=1)
    worst = float(np.max(np.abs(norms - 1.0))) if a.size else 0.0
    if worst > NORM_TOL:
        raise DomainError(f"{name} must be unit vectors (max |norm-1| = {worst:.3e})")
    return a


def _ntk_from_inner(s: np.ndarray) -> np.ndarray:
    # clip guards arccos against |s| crossing 1 by rounding on duplicated points
    s = np.clip(s, -1.0, 1.0)
    return s * (np.pi - np.arccos(s)) / (2.0 * np.pi)


def ntk_value(x, x_prime) -> float:
    """Closed-form kernel value for a single pair of unit vectors."""
    a = _check_unit_rows(x, "x")[0]
    b = _check_unit_rows(x_prime, "x_prime")[0]
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(_ntk_from_inner(np.dot(a, b)))


def eig_extremes(values: np.ndarray) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    n = values.shape[0]
    if n <= _DENSE_EIG_LIMIT:
        w = np.linalg.eigvalsh(values)
        return float(w[0]), float(w[-1])
    lo = scipy.sparse.linalg.eigsh(values, k=1, which="SA", return_eigenvectors=False)
    hi = scipy.sparse.linalg.eigsh(values, k=1, which="LA", return_eigenvectors=False)
    return float(lo[0]), float(hi[0])


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric PSD kernel matrix with cached extreme eigenvalues."""

    values: np.ndarray
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        self.values.setflags(write=False)

    @classmethod
    def from_values(cls, values: np.ndarray) -> "KernelMatrix":
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ShapeError(f"kernel matrix must be square, got {v.shape}")
        v = 0.5 * (v + v.T)  # commutative addition makes this exactly symmetric
        lo, hi = eig_extremes(v)
        if lo < -PSD_TOL:
            raise ConditioningError("kernel matrix is not PSD", lambda_min=lo)
        return cls(v, lo, hi)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def submatrix(self, keep) -> "KernelMatrix":
        """Principal submatrix on the kept indices, sliced rather than recomputed."""
        idx = np.asarray(keep)
        return KernelMatrix.from_values(self.values[np.ix_(idx, idx)])


@dataclass(frozen=True)
class KernelCross:
    """Kernel values between one test point and every training point."""

    values: np.ndarray
    test_point: np.ndarray

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def jitter_for(kernel: KernelMatrix) -> float:
    """Diagonal jitter that makes a ridgeless solve safe on this kernel.

    Zero when the kernel is already strictly PD (lambda_min >= 1e-10),
    otherwise 1e-10 * trace / n.
    """
    if kernel.lambda_min >= 1e-10:
        return 0.0
    return 1e-10 * float(np.trace(kernel.values)) / kernel.n


def gram(data: Dataset) -> KernelMatrix:
    """Training Gram matrix under the closed-form kernel.

    The diagonal is pinned to exactly 1/2 (its analytic value on unit-norm
    data) and the result is exactly symmetric.
    """
    if data.n == 0:
        raise EmptyDatasetError("cannot build a Gram matrix from zero points")
    inner = data.inputs @ data.inputs.T
    k = _ntk_from_inner(inner)
    k = 0.5 * (k + k.T)
    np.fill_diagonal(k, 0.5)
    return KernelMatrix.from_values(k)


def cross(data: Dataset, test_point) -> KernelCross:
    """Kernel column between a test point and the training set."""
    t = _check_unit_rows(test_point, "test_point")[0]
    if t.shape[0] != data.dim:
        raise ShapeError(f"test point has dim {t.shape[0]}, data has dim {data.dim}")
    return KernelCross(_ntk_from_inner(data.inputs @ t), t)


def cross_many(data: Dataset, test_inputs) -> np.ndarray:
    """Kernel block (n_test, n_train) for a batch of unit-norm test points."""
    t = _check_unit_rows(test_inputs, "test_inputs")
    if t.shape[1] != data.dim:
        raise ShapeError(f"test points have dim {t.shape[1]}, data has dim {data.dim}")
    return _ntk_from_inner(t @ data.inputs.T)


def empirical_kernel(net, data: Dataset, test_inputs=None, block: int = 8192):
    """Finite-width tangent kernel of a two-layer ReLU network at its current weights.

    K[i, j] = <x_i, x_j> / m * #{r : w_r.x_i >= 0 and w_r.x_j >= 0}.
    Hidden units are processed in blocks so the activation mask never
    materializes at full width. Returns a KernelMatrix, plus the
    (n_test, n_train) cross block when test_inputs is given.
    """
    x = data.inputs
    n, m = data.n, net.m
    if net.d != data.dim:
        raise ShapeError(f"network expects dim {net.d}, data has dim {data.dim}")
    t = None
    if test_inputs is not None:
        t = _check_unit_rows(test_inputs, "test_inputs")
    counts = np.zeros((n, n))
    counts_cross = None if t is None else np.zeros((t.shape[0], n))
    x32 = x.astype(np.float32)
    t32 = None if t is None else t.astype(np.float32)
    for lo in range(0, m, block):
        w = np.asarray(net.weights[lo : lo + block], dtype=np.float32)
        # per-block integer counts are exact in float32 (block < 2**24)
        active = (x32 @ w.T >= 0.0).astype(np.float32)
        counts += (active @ active.T).astype(np.float64)
        if t is not None:
            active_t = (t32 @ w.T >= 0.0).astype(np.float32)
            counts_cross += (active_t @ active.T).astype(np.float64)
    k = (x @ x.T) * counts / m
    k = 0.5 * (k + k.T)
    km = KernelMatrix.from_values(k)
    if t is None:
        return km
    kc = (t @ x.T) * counts_cross / m
    return km, kc
