"""Random forest regression built from ``cart`` trees."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from ..errors import EmptyInput
from .cart import _grow_tree

DEFAULT_N_TREES = 500
DEFAULT_MIN_LEAF = 6


@numba.njit(cache=True)
def _forest_leaf_values(X, offsets, feature, threshold, left, right, value):
    n = X.shape[0]
    T = offsets.shape[0] - 1
    out = np.empty((T, n))
    for t in range(T):
        base = offsets[t]
        for i in range(n):
            node = 0
            while left[base + node] >= 0:
                j = base + node
                if X[i, feature[j]] < threshold[j]:
                    node = left[j]
                else:
                    node = right[j]
            out[t, i] = value[base + node]
    return out


@dataclass(frozen=True, eq=False)
class Forest:
    """Bagged trees; predictions are the plain mean of member-tree predictions.

    ``oob_prediction`` holds, for each training row, the mean over trees whose
    bootstrap sample left that row out (full-forest prediction where no tree
    did). It is None without bootstrapping.
    """

    trees: tuple
    mtry: int
    min_leaf: int
    bootstrap: bool
    seed: int
    oob_prediction: np.ndarray | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def __post_init__(self):
        offsets = np.cumsum([0] + [t.n_nodes for t in self.trees]).astype(np.int64)
        packed = {
            name: np.concatenate([getattr(t, name) for t in self.trees])
            for name in ("feature", "threshold", "left", "right", "value")
        }
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "_packed", packed)

    def tree_predictions(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] == 0:
            X = np.zeros((X.shape[0], 1))
        p = self._packed
        return _forest_leaf_values(
            X, self._offsets, p["feature"], p["threshold"], p["left"], p["right"], p["value"]
        )

    def predict(self, X) -> np.ndarray:
        return self.tree_predictions(X).mean(axis=0)

    def fitted(self) -> np.ndarray:
        """Out-of-bag predictions for the training rows."""
        if self.oob_prediction is None:
            raise ValueError("forest was fit without bootstrap; no out-of-bag predictions")
        return self.oob_prediction


def default_mtry(K: int) -> int:
    return max(1, math.ceil(K / 3))


def forest_fit(
    X,
    y,
    n_trees: int = DEFAULT_N_TREES,
    mtry: int | None = None,
    min_leaf: int = DEFAULT_MIN_LEAF,
    seed: int = 0,
    bootstrap: bool = True,
    max_depth: int | None = None,
    criterion: int = 0,
) -> Forest:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, K = X.shape
    if n == 0 or y.shape[0] != n:
        raise EmptyInput("forest_fit needs matching, non-empty X and y")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    mtry = default_mtry(K) if mtry is None else int(mtry)
    if not 1 <= mtry <= max(K, 1):
        raise ValueError(f"mtry={mtry} outside [1, {K}]")
    if K == 0:
        X = np.zeros((n, 1))
        mtry = K = 1
    depth = -1 if max_depth is None else int(max_depth)
    children = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    in_bag = np.zeros((n_trees, n), dtype=bool)
    for t, child in enumerate(children):
        rng = np.random.default_rng(child)
        if bootstrap:
            sample = np.sort(rng.integers(0, n, n)).astype(np.int64)
            in_bag[t, sample] = True
        else:
            sample = np.arange(n, dtype=np.int64)
        tree_seed = int(rng.integers(0, 2**31 - 1))
        trees.append(_grow_tree(X, y, sample, depth, max(1, min_leaf), mtry, criterion, tree_seed))
    forest = Forest(trees=tuple(trees), mtry=mtry, min_leaf=min_leaf, bootstrap=bootstrap, seed=seed)
    if bootstrap:
        per_tree = forest.tree_predictions(X)
        oob = ~in_bag
        n_oob = oob.sum(axis=0)
        sums = np.where(oob, per_tree, 0.0).sum(axis=0)
        full = per_tree.mean(axis=0)
        pred = np.where(n_oob > 0, sums / np.maximum(n_oob, 1), full)
        pred.setflags(write=False)
        object.__setattr__(forest, "oob_prediction", pred)
    return forest
