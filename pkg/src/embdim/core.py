"""Shared domain types: datasets, target standardization, seeded randomness."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

TRAIN = "train"
VAL = "val"
TEST = "test"
SPLIT_NAMES = (TRAIN, VAL, TEST)


class ZeroVarianceError(ValueError):
    """Raised when a standardizer is fitted on a constant target vector."""


def derive_seed(root_seed: int, *parts: object) -> int:
    """Derive a 64-bit child seed from a root seed and a label path.

    Stable across processes and platforms (unlike built-in ``hash``), so every
    component (autoencoder init, batch shuffling, bootstrap, per-tree order)
    can draw from its own stream without perturbing the others.
    """
    h = hashlib.sha256()
    h.update(int(root_seed).to_bytes(8, "little", signed=False))
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest()[:8], "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class Standardizer:
    """Affine target transform fitted on the training split only."""

    mean: float
    std: float

    def __post_init__(self):
        if not np.isfinite(self.mean) or not np.isfinite(self.std):
            raise ValueError("standardizer statistics must be finite")
        if self.std <= 0:
            raise ZeroVarianceError(
                "standardizer std must be strictly positive (zero variance input?)"
            )

    def transform(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.mean) / self.std

    def inverse(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) * self.std + self.mean


def fit_standardizer(targets_train: Sequence[float] | np.ndarray) -> Standardizer:
    """Fit mean and population standard deviation on training targets.

    Raises ZeroVarianceError if all values are identical.
    """
    y = np.asarray(targets_train, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("targets must be a non-empty 1-D vector")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets contain non-finite values")
    mean = float(np.mean(y))
    std = float(np.std(y))  # population std (ddof=0)
    if std == 0.0:
        raise ZeroVarianceError("cannot standardize: targets have zero variance")
    return Standardizer(mean=mean, std=std)


def standardize(s: Standardizer, y: np.ndarray) -> np.ndarray:
    return s.transform(y)


@dataclass(frozen=True)
class EmbeddingDataset:
    """Aligned embedding matrix, scalar targets, and split labels.

    ``features`` is an (N, d) float32 matrix, ``targets`` a length-N float64
    vector. ``split_tags`` may be None until a split has been applied; any
    training operation requires all three splits to be non-empty.
    """

    features: np.ndarray
    targets: np.ndarray
    doc_ids: tuple[str, ...]
    split_tags: np.ndarray | None = None
    dates: tuple[str, ...] | None = None  # ISO-8601 strings, aligned with rows
    provenance: str = ""

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float32)
        targs = np.asarray(self.targets, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] == 0 or feats.shape[1] == 0:
            raise ValueError("features must be a non-empty N x d matrix")
        bad = ~np.isfinite(feats)
        if bad.any():
            row = int(np.argwhere(bad)[0, 0])
            raise ValueError(f"non-finite feature value at row {row}")
        if targs.ndim != 1 or targs.shape[0] != feats.shape[0]:
            raise ValueError(
                f"targets length {targs.shape[0]} does not match "
                f"feature row count {feats.shape[0]}"
            )
        if not np.all(np.isfinite(targs)):
            row = int(np.argwhere(~np.isfinite(targs))[0, 0])
            raise ValueError(f"non-finite target at row {row}")
        if len(self.doc_ids) != feats.shape[0]:
            raise ValueError("doc_ids length does not match feature row count")
        if self.split_tags is not None:
            tags = np.asarray(self.split_tags)
            if tags.shape != (feats.shape[0],):
                raise ValueError("split_tags length does not match row count")
            unknown = set(tags.tolist()) - set(SPLIT_NAMES)
            if unknown:
                raise ValueError(f"unknown split tags: {sorted(unknown)}")
            object.__setattr__(self, "split_tags", _frozen(tags))
        if self.dates is not None and len(self.dates) != feats.shape[0]:
            raise ValueError("dates length does not match row count")
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "targets", _frozen(targs))
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def split_indices(self, tag: str) -> np.ndarray:
        if self.split_tags is None:
            raise ValueError("dataset has no split tags; apply a split first")
        if tag not in SPLIT_NAMES:
            raise ValueError(f"unknown split tag {tag!r}")
        return np.flatnonzero(self.split_tags == tag)

    def require_splits(self) -> None:
        """Check every split is non-empty before any training operation."""
        for tag in SPLIT_NAMES:
            if self.split_indices(tag).size == 0:
                raise ValueError(f"split {tag!r} is empty")

    def with_split_tags(self, tags: np.ndarray) -> "EmbeddingDataset":
        return replace(self, split_tags=np.asarray(tags))

    def with_targets(self, targets: np.ndarray) -> "EmbeddingDataset":
        return replace(self, targets=np.asarray(targets, dtype=np.float64))

    def with_features(self, features: np.ndarray) -> "EmbeddingDataset":
        return replace(self, features=np.asarray(features, dtype=np.float32))


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.flags.writeable = False
    return out
