"""Datasets, sharding, and multinomial logistic regression."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (L, d)
    labels: np.ndarray  # (L,) ints in [0, n_classes)
    n_classes: int

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or len(self.features) == 0:
            raise ValueError("empty dataset")
        if self.labels.shape != (len(self.features),):
            raise ValueError("features and labels disagree on example count")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_params(self) -> int:
        return self.dim * self.n_classes

    def subset(self, indices: Sequence[int]) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.n_classes)

    def to_csv(self, path: str | Path) -> None:
        """Write features then label, one example per row, no header."""
        with open(path, "w") as fh:
            for x, y in zip(self.features, self.labels):
                fh.write(",".join(repr(float(v)) for v in x) + f",{int(y)}\n")


@dataclass(frozen=True)
class Shard:
    owner: int
    indices: np.ndarray  # sorted, unique

    def __post_init__(self) -> None:
        if len(self.indices) == 0:
            raise ValueError(f"shard of worker {self.owner} is empty")

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class LearningRateSchedule:
    eta0: float = 0.2
    delta: float = 0.95
    mode: str = "geometric"

    def __post_init__(self) -> None:
        if self.eta0 <= 0:
            raise ValueError("eta0 must be positive")
        if self.mode not in ("geometric", "constant"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.mode == "geometric" and not 0 < self.delta <= 1:
            raise ValueError("delta must be in (0, 1]")


def eta_at(sched: LearningRateSchedule, k: int) -> float:
    if k < 0:
        raise ValueError("iteration must be non-negative")
    if sched.mode == "constant":
        return sched.eta0
    return sched.eta0 * sched.delta**k


def synth_classification(n_examples: int, dim: int, n_classes: int, seed: int = 0) -> Dataset:
    """Gaussian clusters (unit noise) around ``n_classes`` random centres of norm 3.

    Labels are assigned round-robin and shuffled, so classes are balanced to
    within one example and every class appears.
    """
    if n_classes < 2 or n_examples < n_classes or dim < 1:
        raise ValueError("need n_examples >= n_classes >= 2 and dim >= 1")
    rng = np.random.default_rng(seed)
    centres = rng.standard_normal((n_classes, dim))
    centres *= 3.0 / np.linalg.norm(centres, axis=1, keepdims=True)
    labels = rng.permutation(np.arange(n_examples) % n_classes)
    features = centres[labels] + rng.standard_normal((n_examples, dim))
    return Dataset(features, labels.astype(np.int64), n_classes)


def _read_idx(path: str | Path) -> bytes:
    p = Path(path)
    opener = gzip.open if p.suffix == ".gz" else open
    with opener(p, "rb") as fh:
        return fh.read()


def load_idx(
    images_path: str | Path, labels_path: str | Path, limit: int | None = None, n_classes: int = 10
) -> Dataset:
    """Load an IDX image/label pair (optionally gzipped), pixels scaled to [0, 1]."""
    if limit is not None and limit <= 0:
        raise ValueError("empty dataset")
    raw_img = _read_idx(images_path)
    raw_lbl = _read_idx(labels_path)
    if len(raw_img) < 16 or len(raw_lbl) < 8:
        raise ValueError("truncated IDX header")
    magic, count, rows, cols = struct.unpack(">IIII", raw_img[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise ValueError(f"bad magic {magic:#010x} in images file")
    lmagic, lcount = struct.unpack(">II", raw_lbl[:8])
    if lmagic != IDX_LABELS_MAGIC:
        raise ValueError(f"bad magic {lmagic:#010x} in labels file")
    if count != lcount:
        raise ValueError(f"image/label count mismatch: {count} vs {lcount}")
    if len(raw_img) < 16 + count * rows * cols or len(raw_lbl) < 8 + count:
        raise ValueError("truncated IDX file")
    take = count if limit is None else min(count, limit)
    if take == 0:
        raise ValueError("empty dataset")
    pixels = np.frombuffer(raw_img, dtype=np.uint8, count=take * rows * cols, offset=16)
    labels = np.frombuffer(raw_lbl, dtype=np.uint8, count=take, offset=8)
    features = pixels.reshape(take, rows * cols).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64), n_classes)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path: str | Path, labels_path: str | Path) -> None:
    """Write uint8 images ``(L, rows, cols)`` and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def random_projection(ds: Dataset, dim: int, seed: int = 0) -> Dataset:
    """Project features onto ``dim`` Gaussian directions (scaled by 1/sqrt(dim))."""
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((ds.dim, dim)) / np.sqrt(dim)
    return Dataset(ds.features @ R, ds.labels, ds.n_classes)


def partition(ds: Dataset, n_workers: int, mode: str = "iid", seed: int = 0, s: int = 2) -> list[Shard]:
    """Split example indices into ``n_workers`` disjoint shards.

    ``iid``: shuffled near-equal split. ``label_skew``: worker ``j`` owns classes
    ``j*s .. j*s+s-1`` (mod C); each class is split among its owners and
    classes nobody owns are spread iid.
    """
    L = len(ds)
    if n_workers > L:
        raise ValueError(f"more workers ({n_workers}) than examples ({L})")
    rng = np.random.default_rng(seed)
    if mode == "iid":
        parts = np.array_split(rng.permutation(L), n_workers)
    elif mode == "label_skew":
        C = ds.n_classes
        if not 1 <= s <= C:
            raise ValueError("label_skew needs 1 <= s <= n_classes")
        owners: dict[int, list[int]] = {c: [] for c in range(C)}
        for j in range(n_workers):
            for t in range(s):
                owners[(j * s + t) % C].append(j)
        buckets: list[list[int]] = [[] for _ in range(n_workers)]
        leftover: list[int] = []
        for c in range(C):
            members = rng.permutation(np.flatnonzero(ds.labels == c))
            if owners[c]:
                for j, chunk in zip(owners[c], np.array_split(members, len(owners[c]))):
                    buckets[j].extend(chunk.tolist())
            else:
                leftover.extend(members.tolist())
        leftover = rng.permutation(leftover).tolist()
        for j, chunk in enumerate(np.array_split(np.asarray(leftover, dtype=np.int64), n_workers)):
            buckets[j].extend(chunk.tolist())
        # a worker whose classes are all absent borrows from the largest shard
        for j in range(n_workers):
            if not buckets[j]:
                donor = max(range(n_workers), key=lambda i: len(buckets[i]))
                buckets[j].append(buckets[donor].pop())
        parts = [np.asarray(b, dtype=np.int64) for b in buckets]
    else:
        raise ValueError(f"unknown partition mode {mode!r}")
    return [Shard(j, np.sort(part)) for j, part in enumerate(parts)]


def _logits(X: np.ndarray, w: np.ndarray, n_classes: int) -> np.ndarray:
    W = w.reshape(n_classes, X.shape[1])
    return X @ W.T


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _check_dim(ds: Dataset, w: np.ndarray) -> None:
    if w.shape != (ds.n_params,):
        raise ValueError(f"parameter dimension {w.shape} does not match {ds.n_params}")


def loss(ds: Dataset, indices: Sequence[int] | np.ndarray | None, w: np.ndarray) -> float:
    """Mean cross-entropy over ``indices`` (all examples if ``None``)."""
    _check_dim(ds, w)
    X = ds.features if indices is None else ds.features[indices]
    y = ds.labels if indices is None else ds.labels[indices]
    logp = _log_softmax(_logits(X, w, ds.n_classes))
    return float(-logp[np.arange(len(y)), y].mean())


def global_loss(ds: Dataset, shards: Sequence[Shard], w: np.ndarray) -> float:
    """Unweighted mean over workers of their local mean losses."""
    return float(np.mean([loss(ds, sh.indices, w) for sh in shards]))


def gradient(ds: Dataset, indices: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Mean softmax cross-entropy gradient over ``indices``, flattened class-major."""
    _check_dim(ds, w)
    X = ds.features[indices]
    z = _logits(X, w, ds.n_classes)
    probs = np.exp(_log_softmax(z))
    probs[np.arange(len(indices)), ds.labels[indices]] -= 1.0
    return (probs.T @ X).ravel() / len(indices)


def sample_batch(shard: Shard, batch: int, rng: np.random.Generator) -> np.ndarray:
    """Sorted mini-batch indices: without replacement unless ``batch > |shard|``."""
    if batch < 1:
        raise ValueError("batch must be at least 1")
    replace = batch > len(shard)
    return np.sort(rng.choice(shard.indices, size=batch, replace=replace))


def minibatch_gradient(
    ds: Dataset, shard: Shard, w: np.ndarray, batch: int, rng: np.random.Generator
) -> np.ndarray:
    return gradient(ds, sample_batch(shard, batch, rng), w)


def predict(ds: Dataset, w: np.ndarray) -> np.ndarray:
    _check_dim(ds, w)
    return _logits(ds.features, w, ds.n_classes).argmax(axis=1)


def evaluate(w: np.ndarray, test: Dataset | None) -> tuple[float, float]:
    """Cross-entropy loss and top-1 error rate on ``test``."""
    if test is None or len(test) == 0:
        raise ValueError("empty dataset")
    err = float(np.mean(predict(test, w) != test.labels))
    return loss(test, None, w), err
