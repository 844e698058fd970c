"""Datasets: IDX archive parsing, bilinear resizing, client partitions, synthetic blobs."""
from __future__ import annotations

import gzip
import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = np.atleast_2d(np.asarray(self.features, dtype=float))
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if features.shape[0] != labels.shape[0]:
            raise ValueError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    @property
    def class_set(self) -> list[int]:
        return sorted(set(self.labels.tolist()))

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.features[index], self.labels[index])

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()


def concat(datasets: Sequence[Dataset]) -> Dataset:
    return Dataset(
        np.concatenate([d.features for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
    )


# --- IDX ---------------------------------------------------------------------


def read_idx_images(data: bytes) -> np.ndarray:
    """Decode an IDX image archive into an ``(M, rows, cols)`` array in [0, 1]."""
    if len(data) < 16:
        raise IdxFormatError("truncated header")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IMAGES_MAGIC:
        raise IdxFormatError(f"wrong magic for images: {magic:#010x}")
    expected = count * rows * cols
    payload = data[16:]
    if len(payload) < expected:
        raise IdxFormatError(f"truncated payload: need {expected} bytes, have {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8, count=expected)
    return pixels.reshape(count, rows, cols).astype(float) / 255.0


def read_idx_labels(data: bytes) -> list[int]:
    if len(data) < 8:
        raise IdxFormatError("truncated header")
    magic, count = struct.unpack(">II", data[:8])
    if magic != LABELS_MAGIC:
        raise IdxFormatError(f"wrong magic for labels: {magic:#010x}")
    payload = data[8:]
    if len(payload) != count:
        raise IdxFormatError(f"label count {count} does not match payload of {len(payload)} bytes")
    return list(payload)


def write_idx_images(images: np.ndarray) -> bytes:
    """Encode ``(M, rows, cols)`` intensities in [0, 1] (or raw uint8) as IDX bytes."""
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.rint(np.clip(images, 0, 1) * 255).astype(np.uint8)
    m, rows, cols = images.shape
    return struct.pack(">IIII", IMAGES_MAGIC, m, rows, cols) + images.tobytes()


def write_idx_labels(labels: Sequence[int]) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", LABELS_MAGIC, labels.shape[0]) + labels.tobytes()


def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    return raw


def load_idx_dataset(images_path, labels_path, size: int | None = 16) -> Dataset:
    """Read an image/label archive pair, resize to ``size`` x ``size`` and flatten."""
    images = read_idx_images(_read_bytes(images_path))
    labels = read_idx_labels(_read_bytes(labels_path))
    if len(labels) != images.shape[0]:
        raise IdxFormatError(f"{images.shape[0]} images but {len(labels)} labels")
    if size is not None and images.shape[1:] != (size, size):
        images = np.stack([bilinear_downsample(img, size, size) for img in images])
    return Dataset(images.reshape(images.shape[0], -1), labels)


# --- resizing ------------------------------------------------------------------


def _axis_weights(n_in: int, n_out: int):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def bilinear_downsample(image: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Resize with half-pixel centres (align_corners=False), edge-clamped."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2 or image.size == 0:
        raise ValueError("image must be a non-empty 2-D array")
    if out_rows < 1 or out_cols < 1:
        raise ValueError("output size must be >= 1")
    r0, r1, fr = _axis_weights(image.shape[0], out_rows)
    c0, c1, fc = _axis_weights(image.shape[1], out_cols)
    top = image[r0][:, c0] * (1 - fc) + image[r0][:, c1] * fc
    bottom = image[r1][:, c0] * (1 - fc) + image[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bottom * fr[:, None]


# --- partitions ----------------------------------------------------------------


@dataclass(frozen=True)
class PartitionPlan:
    """Per-client ``(class, count)`` requests, drawn without replacement."""

    clients: tuple[tuple[tuple[int, int], ...], ...]
    rng_seed: int = 0

    @classmethod
    def from_lists(cls, clients, rng_seed: int = 0) -> "PartitionPlan":
        return cls(tuple(tuple((int(c), int(n)) for c, n in spec) for spec in clients), rng_seed)


def partition_indices(labels: np.ndarray, plan: PartitionPlan) -> list[np.ndarray]:
    labels = np.asarray(labels)
    rng = np.random.default_rng(plan.rng_seed)
    pools = {}
    for cls in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == cls)
        pools[cls] = list(rng.permutation(idx))
    demand: dict[int, int] = {}
    for spec in plan.clients:
        for cls, count in spec:
            demand[cls] = demand.get(cls, 0) + count
    for cls, need in demand.items():
        have = len(pools.get(cls, []))
        if need > have:
            raise ValueError(f"plan needs {need} samples of class {cls}, only {have} available")
    cursor = {cls: 0 for cls in pools}
    out = []
    for spec in plan.clients:
        taken = []
        for cls, count in spec:
            if count == 0:
                continue
            start = cursor[cls]
            taken.extend(pools[cls][start:start + count])
            cursor[cls] = start + count
        out.append(np.array(taken, dtype=np.int64))
    return out


def partition(dataset: Dataset, plan: PartitionPlan) -> list[Dataset]:
    return [dataset.subset(idx) for idx in partition_indices(dataset.labels, plan)]


def per_class_plan(classes: Sequence[int], per_class: int) -> tuple[tuple[int, int], ...]:
    return tuple((int(c), per_class) for c in classes)


# --- synthetic data ----------------------------------------------------------------

BLOB_OFFSET = 3.0


def blob_centers(num_classes: int, dimension: int, separation: float, seed: int = 0) -> np.ndarray:
    """Class means at distance ``separation`` from the origin along random directions.

    While ``num_classes <= dimension`` the directions are orthonormal, so every
    pair of centres is ``separation * sqrt(2)`` apart.  Directions are rotated
    away from the coordinate axes: axis-aligned clusters would sit on single
    basis states after amplitude encoding and be trivially read out.
    """
    rng = np.random.default_rng([seed, 0xB10B])
    q, r = np.linalg.qr(rng.normal(size=(dimension, dimension)))
    q = q * np.sign(np.diag(r))
    centers = np.empty((num_classes, dimension))
    k = min(num_classes, dimension)
    centers[:k] = q.T[:k]
    if num_classes > dimension:
        extra = rng.normal(size=(num_classes - dimension, dimension))
        centers[dimension:] = extra / np.linalg.norm(extra, axis=1, keepdims=True)
    return separation * centers


def synthetic_blobs(
    num_classes: int,
    per_class: int,
    dimension: int,
    separation: float,
    seed,
    offset: float | None = None,
) -> Dataset:
    """Unit-variance Gaussian clusters, shifted by a fixed offset and clipped at zero.

    The affine shift does not depend on the sample, so separately generated
    sets share one distribution.
    """
    if offset is None:
        offset = BLOB_OFFSET
    if num_classes < 2 or per_class < 1:
        raise ValueError("need at least 2 classes and 1 sample per class")
    rng = np.random.default_rng(seed)
    centers = blob_centers(num_classes, dimension, separation)
    labels = np.repeat(np.arange(num_classes), per_class)
    feats = centers[labels] + rng.normal(size=(labels.shape[0], dimension))
    feats = np.clip(feats + offset, 0.0, None)
    # an all-zero row would not be encodable
    empty = ~feats.any(axis=1)
    feats[empty, 0] = 1e-6
    order = rng.permutation(labels.shape[0])
    return Dataset(feats[order], labels[order])
