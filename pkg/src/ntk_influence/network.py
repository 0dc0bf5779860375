"""Two-layer ReLU networks in the lazy regime.

f(x) = 1/sqrt(m) * sum_r a_r relu(w_r . x) with the output signs a_r frozen
at +-1 and only the first layer trained, by full-batch gradient descent on
    1/2 sum_i (f(x_i) - y_i)^2 + lam/2 * |W - W(0)|_F^2.
The regularizer anchors at the initial weights, so the kernel regime's ridge
solution is the infinite-width limit of the trained network.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import Dataset
from .errors import DataFormatError, DivergenceError, ParameterError, ShapeError

_CKPT_MAGIC = b"NTKW"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class NetworkState:
    """Weights and frozen output signs of a two-layer ReLU network.

    weights is (m, d); weights_init is the anchor W(0) the regularizer pulls
    toward; signs holds the +-1 output layer. kappa is the init scale and
    seed the init stream, kept for checkpoints.
    """

    weights: np.ndarray
    weights_init: np.ndarray
    signs: np.ndarray
    kappa: float
    seed: int
    trained: bool = False

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise ShapeError("weights must be (m, d)")
        if self.weights.shape != self.weights_init.shape:
            raise ShapeError("weights and weights_init must share a shape")
        if self.signs.shape != (self.weights.shape[0],):
            raise ShapeError("signs must have shape (m,)")
        for arr in (self.weights, self.weights_init, self.signs):
            arr.setflags(write=False)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    def max_weight_drift(self) -> float:
        """Largest per-unit distance |w_r - w_r(0)|; stays O(1/sqrt(m)) when lazy."""
        delta = self.weights.astype(np.float64) - self.weights_init.astype(np.float64)
        return float(np.sqrt((delta * delta).sum(axis=1).max()))


@dataclass(frozen=True)
class TrainConfig:
    """Full-batch gradient descent settings."""

    learning_rate: float = 1e-3
    epochs: int = 5000
    lam: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be positive, got {self.learning_rate!r}")
        if self.epochs < 1:
            raise ParameterError(f"epochs must be at least 1, got {self.epochs!r}")
        if self.lam < 0:
            raise ParameterError(f"lam must be nonnegative, got {self.lam!r}")


def init_network(m: int, d: int, kappa: float, seed: int, dtype=np.float32) -> NetworkState:
    """Fresh network: w_r ~ N(0, kappa^2 I), a_r uniform on {-1, +1}."""
    if m < 1 or d < 1:
        raise ParameterError(f"m and d must be positive, got m={m!r}, d={d!r}")
    if kappa <= 0:
        raise ParameterError(f"kappa must be positive, got {kappa!r}")
    rng = np.random.default_rng(seed)
    w = (kappa * rng.standard_normal((m, d))).astype(dtype)
    signs = (2.0 * rng.integers(0, 2, size=m) - 1.0).astype(dtype)
    return NetworkState(w, w.copy(), signs, float(kappa), int(seed), trained=False)


def predict_batch(net: NetworkState, inputs) -> np.ndarray:
    """Network outputs for a batch of rows, accumulated in float64."""
    x = np.atleast_2d(np.asarray(inputs, dtype=net.weights.dtype))
    if x.shape[1] != net.d:
        raise ShapeError(f"inputs have dim {x.shape[1]}, network expects {net.d}")
    hidden = np.maximum(x @ net.weights.T, 0.0).astype(np.float64)
    out_scale = net.signs.astype(np.float64) / np.sqrt(net.m)
    return hidden @ out_scale


def loss_and_gradient(weights, weights_init, signs, inputs, labels, lam: float):
    """Loss and its gradient in the first-layer weights, at the given weights.

    Heavy matmuls run in the weights' dtype; the loss itself accumulates in
    float64. The ReLU mask uses z > 0, i.e. subgradient 0 at the kink.
    """
    dtype = weights.dtype
    x = np.asarray(inputs, dtype=dtype)
    m = weights.shape[0]
    scale = np.asarray(1.0 / np.sqrt(m), dtype=dtype)
    z = x @ weights.T
    hidden = np.maximum(z, 0.0)
    out = hidden @ (signs * scale)
    resid64 = out.astype(np.float64) - np.asarray(labels, dtype=np.float64)
    loss = 0.5 * float(resid64 @ resid64)
    back = (z > 0.0) * resid64.astype(dtype)[:, None]
    grad = (back.T @ x) * (signs * scale)[:, None]
    if lam:
        delta = weights - weights_init
        loss += 0.5 * lam * float(np.einsum("ij,ij->", delta, delta, dtype=np.float64))
        grad = grad + np.asarray(lam, dtype=dtype) * delta
    return loss, grad


def train(net: NetworkState, data: Dataset, config: TrainConfig) -> tuple[NetworkState, np.ndarray]:
    """Full-batch gradient descent from the network's current weights.

    Returns the trained network and the per-epoch loss trace (loss measured
    before each update). Raises on non-finite losses and when the final loss
    fails to improve on the initial one.
    """
    if data.dim != net.d:
        raise ShapeError(f"data dim {data.dim} does not match network dim {net.d}")
    dtype = net.weights.dtype
    x = np.ascontiguousarray(data.inputs, dtype=dtype)
    y = data.labels
    w = net.weights.copy()
    lr = np.asarray(config.learning_rate, dtype=dtype)
    losses = np.empty(config.epochs)
    # overflow shows up as a non-finite loss one step later; the guard below
    # turns it into a DivergenceError, so the transient warnings are noise
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(config.epochs):
            loss, grad = loss_and_gradient(w, net.weights_init, net.signs, x, y, config.lam)
            losses[step] = loss
            if not np.isfinite(loss):
                raise DivergenceError("loss became non-finite", step=step)
            w -= lr * grad
    if losses[-1] > losses[0] * (1.0 + 1e-9) + 1e-12:
        raise DivergenceError(
            f"final loss {losses[-1]:.6g} exceeds initial {losses[0]:.6g}",
            step=config.epochs - 1,
        )
    trained = NetworkState(w, net.weights_init, net.signs, net.kappa, net.seed, trained=True)
    return trained, losses


def retrain_influence(
    data: Dataset,
    i: int,
    test_point,
    y_test: float,
    net_seed: int,
    m: int,
    kappa: float,
    config: TrainConfig,
    base_net: NetworkState | None = None,
) -> float:
    """Ground-truth influence by actually retraining without point i.

    Both runs start from the identical initialization (same seed, same m),
    so the only difference is the deleted point. base_net, when given, is a
    network already trained on the full set under the same config.
    """
    if not 0 <= i < data.n:
        raise IndexError(f"training index {i} out of range for n={data.n}")
    init = init_network(m, data.dim, kappa, net_seed)
    if base_net is None:
        base_net, _ = train(init, data, config)
    loo_net, _ = train(init, data.without(i), config)
    test = np.atleast_2d(np.asarray(test_point, dtype=np.float64))
    y = float(y_test)
    full_loss = 0.5 * (float(predict_batch(base_net, test)[0]) - y) ** 2
    loo_loss = 0.5 * (float(predict_batch(loo_net, test)[0]) - y) ** 2
    return loo_loss - full_loss


def retrain_influences(
    data: Dataset,
    indices,
    test_point,
    y_test: float,
    net_seed: int,
    m: int,
    kappa: float,
    config: TrainConfig,
) -> np.ndarray:
    """Retraining influences for several training points, sharing one base run."""
    init = init_network(m, data.dim, kappa, net_seed)
    base_net, _ = train(init, data, config)
    return np.array(
        [
            retrain_influence(
                data, int(i), test_point, y_test, net_seed, m, kappa, config, base_net
            )
            for i in np.asarray(indices)
        ]
    )


def save_network(path: str | Path, net: NetworkState) -> None:
    """Binary checkpoint: header (m, d, kappa, seed, trained) then W, W(0), signs."""
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(
            struct.pack(
                "<IQQdqB", _CKPT_VERSION, net.m, net.d, net.kappa, net.seed, int(net.trained)
            )
        )
        for arr in (net.weights, net.weights_init, net.signs):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_network(path: str | Path) -> NetworkState:
    raw = Path(path).read_bytes()
    header = struct.Struct("<IQQdqB")
    if raw[:4] != _CKPT_MAGIC:
        raise DataFormatError("not a network checkpoint", offset=0)
    if len(raw) < 4 + header.size:
        raise DataFormatError("truncated checkpoint header", offset=len(raw))
    version, m, d, kappa, seed, trained = header.unpack_from(raw, 4)
    if version != _CKPT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}", offset=4)
    expected = 4 + header.size + 4 * (2 * m * d + m)
    if len(raw) != expected:
        raise DataFormatError(
            f"expected {expected} bytes for m={m}, d={d}, found {len(raw)}",
            offset=min(len(raw), expected),
        )
    flat = np.frombuffer(raw, dtype="<f4", offset=4 + header.size)
    w = flat[: m * d].reshape(m, d).copy()
    w0 = flat[m * d : 2 * m * d].reshape(m, d).copy()
    signs = flat[2 * m * d :].copy()
    return NetworkState(w, w0, signs, kappa, seed, trained=bool(trained))
