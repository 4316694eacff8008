"""Dataset containers, binary loaders (CIFAR-10, IDX) and synthetic data.

Pixel data is scaled by 1/255 and stored as float32; nothing else is done
to it (no mean/std standardization).
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

CIFAR_RECORD = 1 + 3 * 32 * 32
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILE = "test_batch.bin"
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DatasetFormatError(ValueError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class LabelOutOfRangeError(DatasetFormatError):
    pass


class BadMagicError(DatasetFormatError):
    pass


class CountMismatchError(DatasetFormatError):
    pass


class UnachievableRatioError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "labels", labels)
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be 'train' or 'test', got {self.split!r}")
        if len(self.features) != labels.size:
            raise ValueError(f"{len(self.features)} feature rows but {labels.size} labels")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise LabelOutOfRangeError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def input_shape(self) -> tuple[int, ...]:
        return tuple(self.features.shape[1:])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes, self.split)


# --- CIFAR-10 binary -------------------------------------------------------


def read_cifar10_batch(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse one batch file into uint8 images (N, 3, 32, 32) and labels (N,)."""
    raw = Path(path).read_bytes()
    if len(raw) % CIFAR_RECORD != 0:
        raise TruncatedFileError(
            f"{path}: {len(raw)} bytes is not a multiple of the {CIFAR_RECORD}-byte record size"
        )
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.size and labels.max() > 9:
        raise LabelOutOfRangeError(f"{path}: label {int(labels.max())} outside 0..9")
    images = rec[:, 1:].reshape(-1, 3, 32, 32)
    return images, labels


def write_cifar10_batch(path, images: np.ndarray, labels) -> Path:
    """Inverse of :func:`read_cifar10_batch`; ``images`` is uint8 (N, 3, 32, 32)."""
    images = np.asarray(images)
    if images.dtype != np.uint8 or images.shape[1:] != (3, 32, 32):
        raise ValueError("images must be uint8 with shape (N, 3, 32, 32)")
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    rec = np.concatenate([labels, images.reshape(len(images), -1)], axis=1)
    path = Path(path)
    path.write_bytes(rec.tobytes())
    return path


def _cifar_dataset(files: Sequence[Path], split: str) -> Dataset:
    imgs, labs = zip(*(read_cifar10_batch(f) for f in files))
    images = np.concatenate(imgs)
    return Dataset(images.astype(np.float32) / np.float32(255.0), np.concatenate(labs), 10, split)


def load_cifar10(path) -> tuple[Dataset, Dataset]:
    """Load the five training batches and the test batch from a directory."""
    root = Path(path)
    train_files = [root / f for f in CIFAR_TRAIN_FILES]
    test_file = root / CIFAR_TEST_FILE
    missing = [str(f) for f in [*train_files, test_file] if not f.exists()]
    if missing:
        raise FileNotFoundError(f"missing CIFAR-10 batch files: {missing}")
    return _cifar_dataset(train_files, "train"), _cifar_dataset([test_file], "test")


# --- IDX -------------------------------------------------------------------


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(raw: bytes, magic: int, path) -> np.ndarray:
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: too short for an IDX header")
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise BadMagicError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    need = int(np.prod(dims))
    body = raw[header:]
    if len(body) != need:
        raise TruncatedFileError(f"{path}: expected {need} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, num_classes: int | None = None, split: str = "train") -> Dataset:
    """Read an MNIST-style IDX pair (optionally gzipped) into an (N, H, W) dataset."""
    images = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, images_path)
    labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, labels_path).astype(np.int64)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if num_classes is None:
        num_classes = max(int(labels.max()) + 1, 2) if labels.size else 10
    if labels.size and labels.max() >= num_classes:
        raise LabelOutOfRangeError(f"label {int(labels.max())} >= num_classes {num_classes}")
    return Dataset(images.astype(np.float32) / np.float32(255.0), labels, num_classes, split)


def write_idx(images_path, labels_path, images: np.ndarray, labels) -> None:
    images = np.asarray(images)
    if images.dtype != np.uint8 or images.ndim != 3:
        raise ValueError("images must be uint8 with shape (N, H, W)")
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1)
    n, h, w = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, labels.size) + labels.tobytes())


def to_uint8(features: np.ndarray) -> np.ndarray:
    """Undo the /255 scaling exactly for features that came from bytes."""
    return np.rint(np.asarray(features, dtype=np.float64) * 255.0).astype(np.uint8)


# --- synthetic -------------------------------------------------------------

# class directions are fixed across all datasets; only the noise depends on the seed
_DIRECTION_SEED = 20_240_601


def class_directions(num_classes: int, dim: int) -> np.ndarray:
    """Unit vectors, one per class. Orthonormal when ``num_classes <= dim``."""
    rng = np.random.default_rng([_DIRECTION_SEED, num_classes, dim])
    g = rng.standard_normal((dim, max(num_classes, dim)))
    if num_classes <= dim:
        q, _ = np.linalg.qr(g[:, :num_classes])
        return q.T.copy()
    u = g[:, :num_classes].T
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def synth_blobs(
    num_classes: int,
    n_per_class: int,
    dim: int,
    separation: float,
    noise: float = 1.0,
    seed: int = 0,
    test_fraction: float = 0.2,
) -> tuple[Dataset, Dataset]:
    """Isotropic Gaussian blobs centred at ``separation * u_c``.

    The split is stratified: each class contributes ``round(test_fraction * n)``
    samples to the test set. Both splits are shuffled.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if not separation >= 0:
        raise ValueError("separation must be >= 0")
    if noise <= 0:
        raise ValueError("noise must be > 0")
    if n_per_class < 2:
        raise ValueError("n_per_class must be >= 2")
    centers = separation * class_directions(num_classes, dim)
    rng = np.random.default_rng(seed)
    n_test = int(round(test_fraction * n_per_class))
    train_x, train_y, test_x, test_y = [], [], [], []
    for c in range(num_classes):
        x = centers[c] + noise * rng.standard_normal((n_per_class, dim))
        test_x.append(x[:n_test])
        train_x.append(x[n_test:])
        test_y.append(np.full(n_test, c))
        train_y.append(np.full(n_per_class - n_test, c))

    def _pack(xs, ys, split):
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        perm = rng.permutation(len(y))
        return Dataset(x[perm], y[perm], num_classes, split)

    return _pack(train_x, train_y, "train"), _pack(test_x, test_y, "test")


def write_synth(out_dir, train: Dataset, test: Dataset, manifest: dict) -> Path:
    """Save both splits to ``data.npz`` and the generator settings to ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.savez(
        out / "data.npz",
        train_x=train.features,
        train_y=train.labels,
        test_x=test.features,
        test_y=test.labels,
    )
    body = dict(manifest)
    body.update(num_classes=train.num_classes, n_train=len(train), n_test=len(test))
    (out / "manifest.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return out


def load_synth(out_dir) -> tuple[Dataset, Dataset, dict]:
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    k = int(manifest["num_classes"])
    with np.load(out / "data.npz", allow_pickle=False) as d:
        train = Dataset(d["train_x"], d["train_y"], k, "train")
        test = Dataset(d["test_x"], d["test_y"], k, "test")
    return train, test, manifest


# --- imbalance -------------------------------------------------------------


@dataclass(frozen=True)
class ImbalanceSpec:
    majority: int
    minority: int
    ratio: float

    def to_dict(self) -> dict:
        return {"majority": self.majority, "minority": self.minority, "ratio": self.ratio}


def make_imbalanced(d: Dataset, spec: ImbalanceSpec, seed: int = 0) -> Dataset:
    """Down-sample the minority class so majority:minority equals ``spec.ratio``.

    All other samples are kept. The output order is a seeded shuffle.
    """
    k = d.num_classes
    if not (0 <= spec.majority < k and 0 <= spec.minority < k) or spec.majority == spec.minority:
        raise UnachievableRatioError(f"invalid class pair ({spec.majority}, {spec.minority}) for K={k}")
    if not spec.ratio >= 1:
        raise UnachievableRatioError(f"ratio must be >= 1, got {spec.ratio}")
    counts = d.class_counts()
    n_major, n_minor = int(counts[spec.majority]), int(counts[spec.minority])
    target = n_major / spec.ratio
    keep = int(round(target))
    if abs(target - keep) > 1e-9 or keep < 1:
        raise UnachievableRatioError(
            f"{n_major} majority samples cannot be split at ratio {spec.ratio} into a whole minority count"
        )
    if keep > n_minor:
        raise UnachievableRatioError(f"need {keep} minority samples but only {n_minor} exist")
    rng = np.random.default_rng(seed)
    minority_idx = np.flatnonzero(d.labels == spec.minority)
    kept_minor = rng.choice(minority_idx, size=keep, replace=False)
    others = np.flatnonzero(d.labels != spec.minority)
    idx = np.concatenate([others, kept_minor])
    return d.subset(idx[rng.permutation(idx.size)])
