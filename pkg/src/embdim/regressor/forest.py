"""Random forest regression on CART trees grown with exhaustive split search."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..core import derive_seed, make_rng
from . import _cart


@dataclass(frozen=True)
class ForestConfig:
    """Defaults pin the conventional random-forest regression parameters:
    100 trees, unlimited depth, all features considered at every split,
    bootstrap resamples of size N."""

    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: int | None = None  # None = all features
    bootstrap: bool = True
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be >= 1")


@dataclass
class Tree:
    feature: np.ndarray  # int32, -1 marks a leaf
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64 leaf means

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape[0], dtype=np.float64)
        _cart.predict_tree(
            np.ascontiguousarray(x, dtype=np.float64),
            self.feature, self.threshold, self.left, self.right, self.value, out,
        )
        return out

    def decision_path(self, row: np.ndarray) -> list[int]:
        """Node ids visited for one sample; used by structure-level tests."""
        path = [0]
        node = 0
        while self.feature[node] >= 0:
            node = int(self.left[node] if row[self.feature[node]] <= self.threshold[node] else self.right[node])
            path.append(node)
        return path


@dataclass
class ForestModel:
    trees: list[Tree]
    train_dim: int


def _fit_one_tree(x, y, cfg: ForestConfig, tree_index: int) -> Tree:
    n, d = x.shape
    if cfg.bootstrap:
        rng = make_rng(derive_seed(cfg.seed, "tree-bootstrap", tree_index))
        idx = rng.integers(0, n, size=n)
        xb = np.ascontiguousarray(x[idx])
        yb = np.ascontiguousarray(y[idx])
    else:
        xb = np.ascontiguousarray(x)
        yb = np.ascontiguousarray(y)
    sorted_idx = np.ascontiguousarray(
        np.argsort(xb, axis=0, kind="stable").T.astype(np.int32)
    )
    lcg = np.array([derive_seed(cfg.seed, "tree-feats", tree_index) or 1], dtype=np.uint64)
    max_depth = -1 if cfg.max_depth is None else cfg.max_depth
    max_features = d if cfg.max_features is None else min(cfg.max_features, d)
    feature, threshold, left, right, value = _cart.build_tree(
        xb, yb, sorted_idx,
        cfg.min_samples_split, cfg.min_samples_leaf, max_depth, max_features, lcg,
    )
    return Tree(feature, threshold, left, right, value)


def forest_fit(x: np.ndarray, y: np.ndarray, cfg: ForestConfig = ForestConfig()) -> ForestModel:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("x must be a non-empty (N, d) matrix")
    if y.shape != (x.shape[0],):
        raise ValueError("y length must match x rows")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")

    if cfg.n_jobs == 1:
        trees = [_fit_one_tree(x, y, cfg, t) for t in range(cfg.n_trees)]
    else:
        # per-tree derived seeds make the result independent of scheduling
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            trees = list(pool.map(lambda t: _fit_one_tree(x, y, cfg, t), range(cfg.n_trees)))
    return ForestModel(trees=trees, train_dim=x.shape[1])


def forest_predict(model: ForestModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.train_dim:
        raise ValueError(f"expected (N, {model.train_dim}) inputs, got {x.shape}")
    acc = np.zeros(x.shape[0], dtype=np.float64)
    for tree in model.trees:  # deterministic reduction by tree index
        acc += tree.predict(x)
    return acc / len(model.trees)
