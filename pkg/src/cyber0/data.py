"""Datasets, client partitions and mini-batches."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Dataset

DATA_DIR_ENV = "CYBER0_DATA_DIR"
IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

_PARTITION_TAG = 0x5A17
_MINIBATCH_TAG = 0xB47C
_SYNTH_TAG = 0x5E7D


class IdxFormatError(ValueError):
    pass


class BadMagicError(IdxFormatError):
    pass


class TruncatedFileError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


class PartitionError(ValueError):
    pass


def _rng(*words: int) -> np.random.Generator:
    return np.random.default_rng([int(w) & 0xFFFFFFFFFFFFFFFF for w in words])


# -- IDX ------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def parse_idx(raw: bytes, magic: int, ndim: int) -> np.ndarray:
    if len(raw) < 4 + 4 * ndim:
        raise TruncatedFileError(f"header needs {4 + 4 * ndim} bytes, file has {len(raw)}")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagicError(f"magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    size = int(np.prod(dims))
    payload = raw[4 + 4 * ndim:]
    if len(payload) < size:
        raise TruncatedFileError(f"payload has {len(payload)} bytes, header promises {size}")
    return np.frombuffer(payload, dtype=np.uint8, count=size).reshape(dims)


def load_mnist_idx(images_path, labels_path, num_classes: int = 10) -> Dataset:
    """Read an IDX image/label pair; pixels are returned scaled to [0, 1]."""
    images = parse_idx(_read_bytes(images_path), IMAGES_MAGIC, 3)
    labels = parse_idx(_read_bytes(labels_path), LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise CountMismatchError(f"{len(images)} images but {len(labels)} labels")
    X = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(X, labels.astype(np.int64), num_classes)


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        if (directory / name).exists():
            return directory / name
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def resolve_mnist_dir(path=None) -> Path:
    if path:
        return Path(path)
    return Path(os.environ.get(DATA_DIR_ENV, Path.home() / "data" / "mnist"))


def mnist_available(path=None) -> bool:
    try:
        directory = resolve_mnist_dir(path)
        _find(directory, "train-images-idx3-ubyte")
        _find(directory, "t10k-images-idx3-ubyte")
        return True
    except FileNotFoundError:
        return False


def load_mnist(path=None) -> tuple[Dataset, Dataset]:
    """Train and test splits from a directory holding the four standard IDX files."""
    directory = resolve_mnist_dir(path)
    train = load_mnist_idx(_find(directory, "train-images-idx3-ubyte"),
                           _find(directory, "train-labels-idx1-ubyte"))
    test = load_mnist_idx(_find(directory, "t10k-images-idx3-ubyte"),
                          _find(directory, "t10k-labels-idx1-ubyte"))
    return train, test


def standardize(train: Dataset, *others: Dataset) -> list[Dataset]:
    """Shift and scale all features by the training set's scalar mean and std."""
    centre, spread = float(train.X.mean()), float(train.X.std())
    return [Dataset((d.X - centre) / spread, d.y, d.num_classes) for d in (train, *others)]


# -- synthetic ------------------------------------------------------------

def synthetic_classification(seed: int, n_samples: int, d_x: int, classes: int,
                             margin: float = 4.0, noise: float = 1.0) -> Dataset:
    """Gaussian blobs around seeded class means of norm ``margin``; classes balanced to within one."""
    if classes < 2:
        raise ValueError("need at least two classes")
    rng = _rng(seed, _SYNTH_TAG)
    means = rng.standard_normal((classes, d_x))
    means *= margin / np.linalg.norm(means, axis=1, keepdims=True)
    y = rng.permutation(np.arange(n_samples) % classes)
    X = means[y] + noise * rng.standard_normal((n_samples, d_x))
    return Dataset(X, y.astype(np.int64), classes)


# -- partitioning ---------------------------------------------------------

@dataclass(frozen=True)
class PartitionSpec:
    kind: str = "iid"           # "iid" or "dirichlet"
    alpha: float = 1.0
    seed: int = 0
    max_retries: int = 1000

    def __post_init__(self):
        if self.kind not in ("iid", "dirichlet"):
            raise PartitionError(f"unknown partition kind {self.kind!r}")
        if self.kind == "dirichlet" and not self.alpha > 0:
            raise PartitionError("Dirichlet alpha must be positive")


def _iid(labels: np.ndarray, n: int, rng: np.random.Generator) -> list[list[int]]:
    clients: list[list[int]] = [[] for _ in range(n)]
    offset = 0
    for label in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == label))
        for k, idx in enumerate(members):
            clients[(offset + k) % n].append(int(idx))
        # carry the round-robin position so remainders spread across clients
        offset = (offset + len(members)) % n
    return clients


def _dirichlet(labels: np.ndarray, n: int, alpha: float, rng: np.random.Generator) -> list[list[int]]:
    clients: list[list[int]] = [[] for _ in range(n)]
    for label in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == label))
        share = rng.dirichlet(np.full(n, alpha))
        counts = rng.multinomial(len(members), share)
        start = 0
        for client, count in enumerate(counts):
            clients[client].extend(int(i) for i in members[start:start + count])
            start += count
    return clients


def partition(labels, n: int, spec: PartitionSpec) -> list[np.ndarray]:
    """Split sample indices over ``n`` clients; every client receives at least one sample."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise PartitionError("cannot partition an empty dataset")
    if n < 1 or len(labels) < n:
        raise PartitionError(f"need 1 <= n <= #samples (n={n}, samples={len(labels)})")
    rng = _rng(spec.seed, _PARTITION_TAG)
    for _ in range(spec.max_retries):
        if spec.kind == "iid":
            clients = _iid(labels, n, rng)
        else:
            clients = _dirichlet(labels, n, spec.alpha, rng)
        if all(clients):
            return [np.array(sorted(c), dtype=np.int64) for c in clients]
    raise PartitionError(f"no partition without empty clients after {spec.max_retries} draws")


def minibatch(indices, batch_size: int, seed: int, t: int, l: int, client: int) -> np.ndarray:
    """Uniform draw without replacement of ``min(batch_size, len(indices))`` sample indices."""
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) == 0:
        raise ValueError("client holds no data")
    if batch_size >= len(indices):
        return indices.copy()
    pick = _rng(seed, t, l, client, _MINIBATCH_TAG).choice(len(indices), size=batch_size, replace=False)
    return indices[pick]
