"""Datasets on the unit sphere: loading, synthesis, density, label noise.

Every dataset this package consumes has unit-norm rows; loaders normalize and
everything downstream may assume norms are exact to float precision.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DataFormatError,
    DomainError,
    EmptyDatasetError,
    ParameterError,
    ShapeError,
)

NORM_TOL = 1e-9

_IDX_IMAGE_MAGIC = 0x00000803
_IDX_LABEL_MAGIC = 0x00000801


def _as_float_matrix(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-d, got ndim={a.ndim}")
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable (inputs, labels) pair with optional cluster ids and pre-noise labels.

    inputs rows are unit vectors; labels are scalar floats. group_ids tags the
    source cluster for synthetic mixtures; clean_labels records the labels as
    they were before any noise was injected.
    """

    inputs: np.ndarray
    labels: np.ndarray
    group_ids: np.ndarray | None = None
    clean_labels: np.ndarray | None = None

    def __post_init__(self):
        inputs = _as_float_matrix(self.inputs, "inputs")
        labels = np.asarray(self.labels, dtype=np.float64)
        if labels.ndim != 1:
            raise ShapeError(f"labels must be 1-d, got ndim={labels.ndim}")
        if inputs.shape[0] == 0:
            raise EmptyDatasetError("dataset has zero rows")
        if inputs.shape[0] != labels.shape[0]:
            raise ShapeError(
                f"{inputs.shape[0]} input rows but {labels.shape[0]} labels"
            )
        norms = np.linalg.norm(inputs, axis=1)
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst > NORM_TOL:
            raise DomainError(f"input rows must be unit vectors (max |norm-1| = {worst:.3e})")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)
        for name in ("group_ids", "clean_labels"):
            value = getattr(self, name)
            if value is None:
                continue
            dtype = np.int64 if name == "group_ids" else np.float64
            arr = np.asarray(value, dtype=dtype)
            if arr.shape != (inputs.shape[0],):
                raise ShapeError(f"{name} must have shape ({inputs.shape[0]},)")
            object.__setattr__(self, name, arr)
        for arr in (self.inputs, self.labels, self.group_ids, self.clean_labels):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, indices) -> "Dataset":
        """New dataset restricted to the given row indices (order preserved)."""
        idx = np.asarray(indices)
        return Dataset(
            self.inputs[idx],
            self.labels[idx],
            None if self.group_ids is None else self.group_ids[idx],
            None if self.clean_labels is None else self.clean_labels[idx],
        )

    def without(self, i: int) -> "Dataset":
        """New dataset with row i removed."""
        if not 0 <= i < self.n:
            raise IndexError(f"index {i} out of range for n={self.n}")
        keep = np.concatenate([np.arange(i), np.arange(i + 1, self.n)])
        return Dataset(
            self.inputs[keep],
            self.labels[keep],
            None if self.group_ids is None else self.group_ids[keep],
            None if self.clean_labels is None else self.clean_labels[keep],
        )


def normalize_rows(x) -> np.ndarray:
    """Scale each row to unit Euclidean norm. Zero rows are a domain error."""
    a = _as_float_matrix(x, "inputs")
    norms = np.linalg.norm(a, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DomainError(f"row {zero[0]} has zero norm and cannot be normalized")
    return a / norms[:, None]


def _apply_class_filter(
    inputs: np.ndarray, raw_labels: np.ndarray, class_filter: tuple | None
) -> tuple[np.ndarray, np.ndarray]:
    if class_filter is None:
        return inputs, raw_labels.astype(np.float64)
    if len(class_filter) != 2 or class_filter[0] == class_filter[1]:
        raise ParameterError(f"class_filter must be two distinct classes, got {class_filter!r}")
    pos, neg = (float(class_filter[0]), float(class_filter[1]))
    keep = (raw_labels == pos) | (raw_labels == neg)
    if not np.any(keep):
        raise EmptyDatasetError(f"no rows left after filtering to classes {class_filter!r}")
    labels = np.where(raw_labels[keep] == pos, 1.0, -1.0)
    return inputs[keep], labels


def _load_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    raw = path.read_bytes()
    if not raw.strip():
        raise EmptyDatasetError(f"{path} is empty")
    rows: list[list[float]] = []
    offset = 0
    width = None
    for lineno, line in enumerate(raw.splitlines(keepends=True)):
        text = line.decode("utf-8", errors="replace").strip()
        if text:
            fields = [f.strip() for f in text.split(",")]
            try:
                values = [float(f) for f in fields]
            except ValueError:
                if lineno == 0:
                    offset += len(line)
                    continue  # header row
                bad = next(f for f in fields if not _is_float(f))
                raise DataFormatError(
                    f"line {lineno + 1}: cannot parse {bad!r} as a number",
                    offset=offset + line.decode("utf-8", errors="replace").find(bad),
                ) from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataFormatError(
                    f"line {lineno + 1}: expected {width} fields, found {len(values)}",
                    offset=offset,
                )
            rows.append(values)
        offset += len(line)
    if not rows:
        raise EmptyDatasetError(f"{path} contains no data rows")
    if width < 2:
        raise DataFormatError("need at least one feature column plus a label column", offset=0)
    table = np.asarray(rows, dtype=np.float64)
    return table[:, :-1], table[:, -1]


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _read_idx(path: Path, expect_magic: int) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated IDX header", offset=len(raw))
    (magic,) = struct.unpack_from(">l", raw, 0)
    if magic != expect_magic:
        raise DataFormatError(
            f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expect_magic:08x}", offset=0
        )
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise DataFormatError(f"{path}: truncated IDX dimension header", offset=len(raw))
    dims = struct.unpack_from(f">{ndim}l", raw, 4)
    count = int(np.prod(dims))
    if len(raw) != header_len + count:
        raise DataFormatError(
            f"{path}: expected {header_len + count} bytes for dims {dims}, found {len(raw)}",
            offset=min(len(raw), header_len + count),
        )
    data = np.frombuffer(raw, dtype=np.uint8, offset=header_len)
    return data.reshape(dims)


def _load_idx_pair(images_path: Path, labels_path: Path) -> tuple[np.ndarray, np.ndarray]:
    images = _read_idx(images_path, _IDX_IMAGE_MAGIC)
    labels = _read_idx(labels_path, _IDX_LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels", offset=0
        )
    flat = images.reshape(images.shape[0], -1).astype(np.float64)
    return flat, labels.astype(np.float64)


def _derive_labels_path(images_path: Path) -> Path:
    name = images_path.name
    for a, b in (("images", "labels"), ("idx3", "idx1")):
        name = name.replace(a, b)
    derived = images_path.with_name(name)
    if derived == images_path:
        raise ParameterError(
            "labels_path is required: cannot derive it from "
            f"{images_path.name!r} (no 'images'/'idx3' in the name)"
        )
    return derived


def load_dataset(
    path: str | Path,
    format: str = "csv",
    class_filter: tuple | None = None,
    labels_path: str | Path | None = None,
) -> Dataset:
    """Load a dataset from disk and unit-normalize its rows.

    format "csv": comma-separated numeric rows, optional header, label in the
    last column. format "idx": image/label file pair in the standard
    big-endian IDX encoding; images are flattened. class_filter=(a, b) keeps
    rows whose raw label is a or b and maps them to +1 / -1.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    if format == "csv":
        inputs, raw_labels = _load_csv(path)
    elif format == "idx":
        lp = Path(labels_path) if labels_path is not None else _derive_labels_path(path)
        if not lp.exists():
            raise FileNotFoundError(f"no such labels file: {lp}")
        inputs, raw_labels = _load_idx_pair(path, lp)
    else:
        raise ParameterError(f"unknown format {format!r} (expected 'csv' or 'idx')")
    inputs, labels = _apply_class_filter(inputs, raw_labels, class_filter)
    return Dataset(normalize_rows(inputs), labels)


@dataclass(frozen=True)
class MixtureSpec:
    """Cluster mixture on the unit sphere: centers, radii, proportions, labels.

    Points are drawn uniformly in the ball of radius r_k around center k and
    then projected back to the sphere, so r=0 collapses a cluster to its
    center exactly.
    """

    centers: np.ndarray
    radii: np.ndarray
    proportions: np.ndarray
    labels_per_cluster: np.ndarray

    def __post_init__(self):
        centers = _as_float_matrix(self.centers, "centers")
        radii = np.asarray(self.radii, dtype=np.float64)
        props = np.asarray(self.proportions, dtype=np.float64)
        labels = np.asarray(self.labels_per_cluster, dtype=np.float64)
        k = centers.shape[0]
        if k == 0:
            raise EmptyDatasetError("mixture needs at least one cluster")
        for name, arr in (("radii", radii), ("proportions", props), ("labels_per_cluster", labels)):
            if arr.shape != (k,):
                raise ShapeError(f"{name} must have shape ({k},)")
        norms = np.linalg.norm(centers, axis=1)
        if np.max(np.abs(norms - 1.0)) > NORM_TOL:
            raise DomainError("cluster centers must be unit vectors")
        if np.any(radii < 0) or np.any(radii >= 1):
            raise ParameterError("cluster radii must lie in [0, 1)")
        if np.any(props <= 0):
            raise ParameterError("cluster proportions must be positive")
        if abs(float(props.sum()) - 1.0) > 1e-9:
            raise ParameterError(f"proportions must sum to 1, got {props.sum()!r}")
        for a in range(k):
            for b in range(a + 1, k):
                if np.array_equal(centers[a], centers[b]):
                    raise ParameterError(f"clusters {a} and {b} share a center")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "proportions", props)
        object.__setattr__(self, "labels_per_cluster", labels)

    @property
    def n_clusters(self) -> int:
        return self.centers.shape[0]


def allocate_counts(proportions: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder rounding of n * proportions to integers summing to n."""
    props = np.asarray(proportions, dtype=np.float64)
    exact = props * n
    base = np.floor(exact).astype(np.int64)
    short = n - int(base.sum())
    if short:
        # ties in the fractional part break toward the lower cluster index
        order = np.lexsort((np.arange(props.size), -(exact - base)))
        base[order[:short]] += 1
    return base


def generate_mixture(spec: MixtureSpec, n: int, seed: int) -> Dataset:
    """Draw n points from the mixture, deterministically for a given seed."""
    if n < spec.n_clusters:
        raise ParameterError(f"n={n} is fewer than the {spec.n_clusters} clusters")
    counts = allocate_counts(spec.proportions, n)
    rng = np.random.default_rng(seed)
    d = spec.centers.shape[1]
    blocks, label_blocks, group_blocks = [], [], []
    for k in range(spec.n_clusters):
        nk, r = int(counts[k]), float(spec.radii[k])
        if nk == 0:
            continue
        if r == 0.0:
            points = np.tile(spec.centers[k], (nk, 1))
        else:
            direction = rng.standard_normal((nk, d))
            direction /= np.linalg.norm(direction, axis=1)[:, None]
            radius = r * rng.random(nk) ** (1.0 / d)
            points = normalize_rows(spec.centers[k] + radius[:, None] * direction)
        blocks.append(points)
        label_blocks.append(np.full(nk, spec.labels_per_cluster[k]))
        group_blocks.append(np.full(nk, k, dtype=np.int64))
    return Dataset(
        np.vstack(blocks), np.concatenate(label_blocks), np.concatenate(group_blocks)
    )


def flip_labels(data: Dataset, fraction: float, seed: int) -> Dataset:
    """Negate round(fraction * n) labels chosen uniformly without replacement.

    Labels must be +-1. The returned dataset records the pre-noise labels in
    clean_labels (preserving them if the input already carried some).
    """
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError(f"fraction must lie in [0, 1], got {fraction!r}")
    if not np.all(np.abs(data.labels) == 1.0):
        raise DomainError("label flipping requires +-1 labels")
    k = round(fraction * data.n)
    labels = data.labels.copy()
    if k:
        idx = np.random.default_rng(seed).choice(data.n, size=k, replace=False)
        labels[idx] = -labels[idx]
    clean = data.labels if data.clean_labels is None else data.clean_labels
    return Dataset(data.inputs, labels, data.group_ids, clean)


def _pca_project(x: np.ndarray, n_components: int) -> np.ndarray:
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / max(x.shape[0] - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    top = eigvecs[:, ::-1][:, :n_components]
    return centered @ top


def kde_density(data: Dataset | np.ndarray, bandwidth="auto") -> np.ndarray:
    """Gaussian KDE density at each point, computed in top-2 PCA coordinates.

    bandwidth "auto" uses Scott's rule per projected coordinate
    (std * n^(-1/(d+4))); an explicit positive scalar or length-d vector
    overrides it. The sum includes the point itself, so densities are
    strictly positive.
    """
    x = data.inputs if isinstance(data, Dataset) else _as_float_matrix(data, "data")
    n = x.shape[0]
    if n < 2:
        raise ParameterError("density estimation needs at least 2 points")
    proj = _pca_project(x, min(2, x.shape[1]))
    d = proj.shape[1]
    if isinstance(bandwidth, str):
        if bandwidth != "auto":
            raise ParameterError(f"unknown bandwidth rule {bandwidth!r}")
        h = proj.std(axis=0, ddof=1) * n ** (-1.0 / (d + 4))
        if np.any(h == 0):
            raise ParameterError("degenerate projection: a coordinate has zero spread")
    else:
        h = np.broadcast_to(np.asarray(bandwidth, dtype=np.float64), (d,)).copy()
        if np.any(h <= 0):
            raise ParameterError("bandwidth must be positive")
    z = proj / h
    sq = np.sum(z * z, axis=1)
    # -|z_i - z_j|^2 / 2 expanded through one gemm
    expo = z @ z.T - 0.5 * sq[:, None] - 0.5 * sq[None, :]
    norm = n * float(np.prod(h)) * (2.0 * np.pi) ** (d / 2.0)
    return np.exp(np.minimum(expo, 0.0)).sum(axis=1) / norm


def dataset_to_json(data: Dataset) -> str:
    """Serialize a dataset to JSON with exact float round-trip."""
    payload = {
        "inputs": data.inputs.tolist(),
        "labels": data.labels.tolist(),
        "group_ids": None if data.group_ids is None else data.group_ids.tolist(),
        "clean_labels": None if data.clean_labels is None else data.clean_labels.tolist(),
    }
    return json.dumps(payload)


def dataset_from_json(text: str) -> Dataset:
    try:
        payload = json.loads(text)
        return Dataset(
            np.asarray(payload["inputs"], dtype=np.float64),
            np.asarray(payload["labels"], dtype=np.float64),
            None if payload.get("group_ids") is None else payload["group_ids"],
            None if payload.get("clean_labels") is None else payload["clean_labels"],
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataFormatError(f"invalid dataset JSON: {exc}") from exc


def save_dataset(path: str | Path, data: Dataset) -> None:
    Path(path).write_text(dataset_to_json(data))


def load_dataset_json(path: str | Path) -> Dataset:
    return dataset_from_json(Path(path).read_text())
