"""Dataset loading, synthetic data, IID partitioning and label noise."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .learn import EvalSet

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxError(ValueError):
    pass


class BadMagic(IdxError):
    pass


class CountMismatch(IdxError):
    pass


class TruncatedFile(IdxError):
    pass


class TooFewSamples(ValueError):
    pass


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] == b"\x1f\x8b":
        blob = gzip.decompress(blob)
    return blob


def _parse_idx(blob: bytes, magic: int, path) -> np.ndarray:
    if len(blob) < 4:
        raise TruncatedFile(f"{path}: too short for an IDX header")
    (found,) = struct.unpack(">I", blob[:4])
    if found != magic:
        raise BadMagic(f"{path}: magic {found:#010x}, expected {magic:#010x}")
    ndim = magic & 0xFF
    hdr = 4 + 4 * ndim
    if len(blob) < hdr:
        raise TruncatedFile(f"{path}: header truncated")
    dims = struct.unpack(f">{ndim}I", blob[4:hdr])
    count = int(np.prod(dims))
    if len(blob) < hdr + count:
        raise TruncatedFile(f"{path}: expected {count} data bytes, found {len(blob) - hdr}")
    return np.frombuffer(blob, dtype=np.uint8, count=count, offset=hdr).reshape(dims)


def load_idx(images_path, labels_path, num_classes: int = 10) -> EvalSet:
    """Read an IDX image/label pair (optionally gzipped); pixels scaled to [0, 1]."""
    images = _parse_idx(_read_bytes(images_path), IMAGES_MAGIC, images_path)
    labels = _parse_idx(_read_bytes(labels_path), LABELS_MAGIC, labels_path)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images but {labels.shape[0]} labels")
    X = images.reshape(images.shape[0], -1).astype(np.float32) / 255.0
    return EvalSet(X, labels.astype(np.int64), num_classes)


def _find(directory, stem: str) -> str:
    for name in (stem, stem + ".gz"):
        path = os.path.join(directory, name)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"no {stem}[.gz] in {directory}")


def load_mnist(directory) -> tuple[EvalSet, EvalSet]:
    """``(train, test)`` from the four standard MNIST files in ``directory``."""
    train = load_idx(_find(directory, "train-images-idx3-ubyte"), _find(directory, "train-labels-idx1-ubyte"))
    test = load_idx(_find(directory, "t10k-images-idx3-ubyte"), _find(directory, "t10k-labels-idx1-ubyte"))
    return train, test


def synth_dataset(num_classes: int, dim: int, per_class: int, separation: float, seed) -> EvalSet:
    """Unit-variance Gaussian blobs around random centres at distance ``separation`` from the origin.

    Rows are shuffled. ``separation == 0`` puts every class on the same centre.
    """
    if num_classes < 1 or dim < 1 or per_class < 1 or separation < 0:
        raise ValueError("num_classes, dim and per_class must be positive; separation non-negative")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((num_classes, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    centers = separation * dirs
    y = np.repeat(np.arange(num_classes), per_class)
    X = centers[y] + rng.standard_normal((y.size, dim))
    order = rng.permutation(y.size)
    return EvalSet(X[order], y[order], num_classes)


def partition_iid(data: EvalSet, n: int, seed) -> list[EvalSet]:
    """Shuffle, then cut into ``n`` contiguous equal shards (remainder to the last)."""
    if n < 1:
        raise ValueError("need at least one shard")
    if len(data) < n:
        raise TooFewSamples(f"{len(data)} samples cannot fill {n} shards")
    order = np.random.default_rng(seed).permutation(len(data))
    size = len(data) // n
    bounds = [k * size for k in range(n)] + [len(data)]
    return [data.subset(order[bounds[k] : bounds[k + 1]]) for k in range(n)]


def inject_noise(data: EvalSet, rate: float, num_classes: int, seed) -> EvalSet:
    """Flip exactly ``round(rate * len(data))`` labels to a uniformly drawn *different* class."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("noise rate must lie in [0, 1]")
    N = len(data)
    k = int(np.floor(rate * N + 0.5))
    if k == 0:
        return data
    if num_classes < 2:
        raise ValueError("label noise needs at least two classes")
    rng = np.random.default_rng(seed)
    idx = rng.choice(N, size=k, replace=False)
    y = data.y.copy()
    y[idx] = (y[idx] + rng.integers(1, num_classes, size=k)) % num_classes
    return EvalSet(data.X, y, data.num_classes)


@dataclass(frozen=True)
class NoisePlan:
    """Client ``k`` of ``n`` gets label-noise rate ``k / n``."""

    num_clients: int

    @property
    def rates(self) -> np.ndarray:
        return np.arange(self.num_clients) / self.num_clients
