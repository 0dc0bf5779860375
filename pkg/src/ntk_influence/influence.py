"""Influence of a training point on a test loss, exactly and via the IHVP shortcut.

The exact influence of deleting point i on test loss at (x, y) is
    I_i = 1/2 (f^(-i)(x) - y)^2 - 1/2 (f(x) - y)^2,
computable in closed form through the rank-one leave-one-out update. The
cheaper inverse-Hessian-vector-product estimate replaces the leave-one-out
residual with the ordinary training residual:
    Ihat_i = alpha_i (f(x) - y) (f(x_i) - y_i).
Their gap is controlled from below by the spectrum of K and from above by
the local sampling density around x_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import scipy.linalg

from . import matio
from .datasets import Dataset
from .errors import ConditioningError, ParameterError, ShapeError, StateError
from .kernel import KernelCross, empirical_kernel
from .ridge import RidgeModel, loo_predict, loo_residual, loo_residuals, predict

ZERO_INFLUENCE_TOL = 1e-12

RECORD_COLUMNS = (
    "test_id",
    "train_index",
    "i_ntk",
    "i_hat",
    "alpha",
    "a_value",
    "term1",
    "term2",
    "lower_bound",
    "error_rate",
)


@dataclass(frozen=True)
class InfluenceRecord:
    """One (test point, training point) influence evaluation.

    i_ntk is the exact loss change; i_hat the IHVP estimate; alpha the
    kernel weight k_te.M e_i; a_value the self-influence A_i; term1/term2
    the first- and second-order pieces of the exact value (i_ntk = term1 +
    term2 and i_hat = (1 - A_i) * term1). error_rate is |i_ntk - i_hat| /
    |i_ntk|, NaN when the exact influence is numerically zero.
    """

    test_id: int
    train_index: int
    i_ntk: float
    i_hat: float
    alpha: float
    a_value: float
    term1: float
    term2: float
    lower_bound: float
    error_rate: float


def influence_exact(model: RidgeModel, cross: KernelCross, y_test: float, i: int) -> float:
    """Exact loss change at (test, y_test) from deleting training point i."""
    f_full = predict(model, cross)
    f_loo = loo_predict(model, cross, i)
    y = float(y_test)
    return 0.5 * (f_loo - y) ** 2 - 0.5 * (f_full - y) ** 2


def decompose(
    model: RidgeModel, cross: KernelCross, y_test: float, i: int
) -> tuple[float, float, float]:
    """(alpha_i, term1, term2) with influence_exact == term1 + term2."""
    alpha_i = float(cross.values @ model.inv[:, i])
    r_loo = loo_residual(model, i)
    resid_test = predict(model, cross) - float(y_test)
    term1 = alpha_i * resid_test * r_loo
    term2 = 0.5 * alpha_i**2 * r_loo**2
    return alpha_i, term1, term2


def influence_ihvp(model: RidgeModel, cross: KernelCross, y_test: float, i: int) -> float:
    """IHVP estimate: alpha_i * (f(x_te) - y_te) * (f(x_i) - y_i)."""
    alpha_i = float(cross.values @ model.inv[:, i])
    resid_test = predict(model, cross) - float(y_test)
    resid_train = float(model.kernel.values[i] @ model.beta - model.labels[i])
    return alpha_i * resid_test * resid_train


def error_rate(i_ntk: float, i_hat: float) -> float:
    """Relative gap |i_ntk - i_hat| / |i_ntk|; NaN when i_ntk is numerically zero."""
    if abs(i_ntk) < ZERO_INFLUENCE_TOL:
        return math.nan
    return abs(i_ntk - i_hat) / abs(i_ntk)


def error_lower_bound(model: RidgeModel, record: "InfluenceRecord") -> float:
    """Spectral lower bound on |i_ntk - i_hat|.

    |I - Ihat| >= lam_min/(lam_min + lam) * |I| - term2, so the IHVP gap
    cannot vanish while the regularizer is comparable to the spectrum.
    """
    return spectral_ratio(model) * abs(record.i_ntk) - record.term2


def spectral_ratio(model: RidgeModel) -> float:
    """lam_min / (lam_min + lam), the floor on A_i."""
    lam_min = max(model.kernel.lambda_min, 0.0)
    lam = model.lam + model.jitter
    if lam_min + lam == 0.0:
        raise ConditioningError("spectral ratio undefined for lam = lam_min = 0")
    return lam_min / (lam_min + lam)


def density_upper_bound(record: "InfluenceRecord", gamma: float, p_k: float, n: int) -> float:
    """Density upper bound on |i_ntk - i_hat| for a point in a cluster of mass p_k.

    |I - Ihat| <= sqrt(gamma / (n^2 p_k)) * |I| + term2. Valid when the
    regularizer clears the cluster-radius threshold (see BoundInputs).
    """
    if not 0.0 < p_k <= 1.0:
        raise ParameterError(f"cluster mass must lie in (0, 1], got {p_k!r}")
    if gamma < 0:
        raise ParameterError(f"gamma must be nonnegative, got {gamma!r}")
    if n < 1:
        raise ParameterError(f"n must be positive, got {n!r}")
    return math.sqrt(gamma / (n**2 * p_k)) * abs(record.i_ntk) + record.term2


def gamma_hat(model: RidgeModel) -> np.ndarray:
    """Data-driven gamma_i = n * A_i^2 / |alpha(x_i)|^2 for every training point.

    alpha(x_i) is the weight vector a test point sitting exactly at x_i
    would see, i.e. the i-th column of M K.
    """
    mk = model.inv @ model.kernel.values
    col_sq = np.einsum("ij,ij->j", mk, mk)
    a = model.a_values()
    return model.n * a**2 / col_sq


@dataclass(frozen=True)
class BoundInputs:
    """Everything the density bound needs about the sampling geometry.

    eps_r bounds the kernel perturbation within a cluster of radius r;
    lam_threshold is the smallest regularizer for which the bound's
    derivation is valid (infinite when sqrt(2)*eps_r >= 1).
    """

    radius: float
    eps_r: float
    lam_threshold: float

    @classmethod
    def from_radius(cls, radius: float, lambda_max: float) -> "BoundInputs":
        if not 0.0 <= radius < 1.0:
            raise ParameterError(f"cluster radius must lie in [0, 1), got {radius!r}")
        if lambda_max <= 0:
            raise ParameterError(f"lambda_max must be positive, got {lambda_max!r}")
        s = 2.0 * radius**2
        eps_r = math.sqrt(s + math.acos(1.0 - s))
        scaled = math.sqrt(2.0) * eps_r
        threshold = math.inf if scaled >= 1.0 else scaled * lambda_max / (1.0 - scaled)
        return cls(radius, eps_r, threshold)


def influence_records(
    model: RidgeModel,
    cross: KernelCross,
    y_test: float,
    test_id: int = 0,
    train_indices=None,
) -> list[InfluenceRecord]:
    """Influence of every (or each given) training point on one test loss.

    Vectorized over training points; all identities are evaluated exactly as
    their scalar counterparts would.
    """
    if cross.values.shape[0] != model.n:
        raise ShapeError(
            f"cross block has {cross.values.shape[0]} entries, model has n={model.n}"
        )
    idx = np.arange(model.n) if train_indices is None else np.asarray(train_indices)
    alpha = model.inv @ cross.values
    r_loo = loo_residuals(model)
    resid_test = predict(model, cross) - float(y_test)
    resid_train = model.fitted_values() - model.labels
    a_vals = model.a_values()
    ratio = spectral_ratio(model)
    term1 = alpha * resid_test * r_loo
    term2 = 0.5 * alpha**2 * r_loo**2
    f_loo = resid_test + alpha * r_loo
    i_ntk = 0.5 * f_loo**2 - 0.5 * resid_test**2
    i_hat = alpha * resid_test * resid_train
    records = []
    for i in idx:
        i = int(i)
        records.append(
            InfluenceRecord(
                test_id=int(test_id),
                train_index=i,
                i_ntk=float(i_ntk[i]),
                i_hat=float(i_hat[i]),
                alpha=float(alpha[i]),
                a_value=float(a_vals[i]),
                term1=float(term1[i]),
                term2=float(term2[i]),
                lower_bound=float(ratio * abs(i_ntk[i]) - term2[i]),
                error_rate=error_rate(float(i_ntk[i]), float(i_hat[i])),
            )
        )
    return records


def records_to_csv(path: str | Path, records) -> None:
    """Write influence records with the fixed, documented column set."""
    rows = [[getattr(r, name) for name in RECORD_COLUMNS] for r in records]
    matio.write_csv(path, RECORD_COLUMNS, rows)


def records_from_csv(path: str | Path) -> list[InfluenceRecord]:
    cols = matio.read_csv_columns(path)
    missing = [c for c in RECORD_COLUMNS if c not in cols]
    if missing:
        raise ParameterError(f"influence CSV is missing columns {missing}")
    n = len(cols["test_id"])
    out = []
    for row in range(n):
        kwargs = {}
        for f in fields(InfluenceRecord):
            raw = cols[f.name][row]
            kwargs[f.name] = int(raw) if f.type == "int" else float(raw)
        out.append(InfluenceRecord(**kwargs))
    return out


def empirical_ihvp_all(net, data: Dataset, lam: float, test_point, y_test: float) -> np.ndarray:
    """Finite-width IHVP influence of every training point on one test loss.

    Computed at the network's current weights with its empirical tangent
    kernel: alphahat_i = khat_te . (Khat + lam*I)^-1 e_i, multiplied by the
    network's own residuals. The network must have been trained.
    """
    from .network import predict_batch

    if not net.trained:
        raise StateError("empirical influence needs a trained network")
    if lam <= 0:
        raise ParameterError(f"empirical IHVP needs lam > 0, got {lam!r}")
    test = np.atleast_2d(np.asarray(test_point, dtype=np.float64))
    km, kc = empirical_kernel(net, data, test_inputs=test)
    a = km.values + lam * np.eye(km.n)
    try:
        cho = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise ConditioningError(
            "empirical kernel system is not positive definite", lambda_min=km.lambda_min
        ) from exc
    alpha = scipy.linalg.cho_solve(cho, kc[0], check_finite=False)
    resid_test = float(predict_batch(net, test)[0]) - float(y_test)
    resid_train = predict_batch(net, data.inputs) - data.labels
    return alpha * resid_test * resid_train


def influence_ihvp_empirical(
    net, data: Dataset, lam: float, test_point, y_test: float, i: int
) -> float:
    """Finite-width IHVP influence of training point i on one test loss."""
    if not 0 <= i < data.n:
        raise IndexError(f"training index {i} out of range for n={data.n}")
    return float(empirical_ihvp_all(net, data, lam, test_point, y_test)[i])
