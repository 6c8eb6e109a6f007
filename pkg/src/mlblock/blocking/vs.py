"""Variable Selection blocking: optional Lasso screening, then a CART
partition of the next outcome, re-applied to updated features and pruned."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..cv import DEFAULT_FOLDS, cv_tune, kfold_split
from ..dataset import PanelDataset, standardize
from ..errors import SingularDesign, TooFewUnits
from ..mlcore.cart import cart_fit, tree_prune_to_min_leaf
from ..mlcore.forest import DEFAULT_N_TREES
from ..mlcore.lasso import ImportanceWeights, lasso_cv, post_lasso_importance
from ..seeds import derive
from .features import TRAIN, UPDATED, VSFeatureMap, lag_layout
from .partition import ComposedDefinition, Partition, TrainingFrame, TreeDefinition

DEFAULT_C_B = 4
MAX_CV_DEPTH = 8


@dataclass(frozen=True, eq=False)
class SelectedFeatures:
    """Ordered feature names kept for partitioning, with importance weights
    keyed by position in ``names``."""

    names: tuple
    indices: tuple  # positions in the full feature map
    weights: ImportanceWeights
    lasso_used: bool

    def weight_vector(self) -> np.ndarray:
        return self.weights.vector(len(self.names))


def wants_feature_selection(mode, K: int, n: int) -> bool:
    if mode in (True, "on"):
        return True
    if mode in (False, "off"):
        return False
    if mode == "auto":
        return K > 10 or K > n / 10
    raise ValueError(f"use_feature_selection must be auto/on/off, got {mode!r}")


def depth_grid(n: int, c_B: int) -> list[int]:
    top = min(MAX_CV_DEPTH, math.ceil(math.log2(max(n / c_B, 1.0))))
    return list(range(0, max(top, 0) + 1))


class _Cart:
    def __init__(self, c_B, criterion):
        self.c_B, self.criterion = c_B, criterion

    def __call__(self, depth, X, y):
        return cart_fit(X, y, depth, self.c_B, self.criterion)


def cv_tree(X, y, c_B: int, seed: int, folds: int = DEFAULT_FOLDS, criterion="mse", rule="min"):
    """CART with depth chosen by K-fold CV over ``depth_grid``."""
    n = len(y)
    grid = depth_grid(n, c_B)
    k = min(folds, n)
    if X.shape[1] == 0 or len(grid) == 1 or k < 2 or n - math.ceil(n / k) < c_B:
        return cart_fit(X, y, 0, c_B, criterion), 0
    result = cv_tune(_Cart(c_B, criterion), X, y, grid, kfold_split(n, k, seed), rule)
    return cart_fit(X, y, result.best, c_B, criterion), result.best


def select_features(M, y, names, mode, K: int, seed: int, rule: str = "min") -> SelectedFeatures:
    """Lasso screening (when requested) plus Post-Lasso importance weights."""
    n = len(y)
    Z, _ = standardize(M) if M.shape[1] else (M, None)
    use = wants_feature_selection(mode, K, n) and M.shape[1] > 0
    if use:
        model, _ = lasso_cv(Z, y, rule=rule, seed=derive(seed, 3))
        idx = list(model.selected)
    else:
        idx = list(range(M.shape[1]))
    try:
        w = post_lasso_importance(Z, y, idx)
        weights = {j: w.weights[k] for j, k in enumerate(idx)}
    except SingularDesign:
        if use:
            weights = {j: float(abs(model.coefficients[k])) for j, k in enumerate(idx)}
        else:
            weights = {j: 1.0 for j in range(len(idx))}
    return SelectedFeatures(
        names=tuple(names[k] for k in idx),
        indices=tuple(idx),
        weights=ImportanceWeights(weights),
        lasso_used=use,
    )


@dataclass(frozen=True, eq=False)
class VSFeatures:
    """Selected VS features in both frames plus the design target."""

    fmap: VSFeatureMap
    selected: SelectedFeatures
    cols: list
    train: np.ndarray
    updated: np.ndarray
    y: np.ndarray


def vs_features(panel: PanelDataset, use_feature_selection="auto", include_yhat: bool = True,
                seed: int = 0, n_trees: int = DEFAULT_N_TREES, periods=None,
                lasso_rule: str = "min") -> VSFeatures:
    """Forest pseudo-features, Lasso screening and importance weights."""
    layout = lag_layout(panel, periods)
    fmap = VSFeatureMap.fit(panel, layout, include_yhat, n_trees, seed)
    M_train = fmap.matrix(panel, TRAIN)
    y = panel.outcome(layout.target)
    K = panel.K + len(panel.time_varying_names)
    selected = select_features(M_train, y, fmap.names, use_feature_selection, K, seed, lasso_rule)
    cols = list(selected.indices)
    return VSFeatures(fmap, selected, cols, M_train[:, cols], fmap.matrix(panel, UPDATED)[:, cols], y)


def vs_blocking(
    panel: PanelDataset,
    c_B: int = DEFAULT_C_B,
    use_feature_selection="auto",
    include_yhat: bool = True,
    subgroup_seed: Partition | None = None,
    seed: int = 0,
    n_trees: int = DEFAULT_N_TREES,
    criterion="mse",
    periods=None,
    lasso_rule: str = "min",
) -> tuple[Partition, SelectedFeatures]:
    """Variable Selection blocking.

    Fits outcome forests for the ``yhat`` pseudo-features, optionally screens
    features with a cross-validated Lasso targeting the latest pre-period,
    grows a CART partition with CV-tuned depth and minimum leaf ``c_B``, then
    places units by their updated features and prunes until every block has
    at least ``c_B`` units.

    With ``subgroup_seed`` the partition refines the seed's cells (its
    definition must read panel covariates by name); only selected features
    are split on.
    """
    if panel.n < 2 * c_B:
        raise TooFewUnits(f"n={panel.n} < 2*c_B={2 * c_B}")
    vf = vs_features(panel, use_feature_selection, include_yhat, seed, n_trees, periods, lasso_rule)
    fmap, selected, cols, y = vf.fmap, vf.selected, vf.cols, vf.y
    F_train, F_upd = vf.train, vf.updated

    if subgroup_seed is None:
        tree, depth = cv_tree(F_train, y, c_B, derive(seed, 4), criterion=criterion)
        tree = tree_prune_to_min_leaf(tree, F_upd, c_B)
        definition = TreeDefinition(tree, selected.names)
        block_of = tree.apply(F_upd)
        features = F_upd
        train_blocks = tree.apply(F_train)
        info = {"strategy": "vs", "cv_depth": depth, "selected": list(selected.names),
                "lasso": selected.lasso_used}

        def assign_train(p, fmap=fmap, cols=cols, tree=tree):
            return tree.apply(fmap.matrix(p, TRAIN)[:, cols])
    else:
        definition, block_of, features, train_blocks = _refine_seed(
            panel, subgroup_seed, F_train, F_upd, y, selected, c_B, seed, criterion
        )
        info = {"strategy": "vs", "subgroup_seed": True, "selected": list(selected.names),
                "lasso": selected.lasso_used}
        seed_names = list(subgroup_seed.definition.feature_names)

        def assign_train(p, fmap=fmap, cols=cols, definition=definition, seed_names=seed_names):
            return definition.assign(np.column_stack([p.feature_matrix(seed_names), fmap.matrix(p, TRAIN)[:, cols]]))

    part = Partition(
        block_of, definition, c_B, features=features,
        training_frame=TrainingFrame(train_blocks, assign_train), info=info,
    ).check()
    return part, selected


def _refine_seed(panel, seed_part, F_train, F_upd, y, selected, c_B, seed, criterion):
    seed_names = list(seed_part.definition.feature_names)
    S = panel.feature_matrix(seed_names)
    cells = seed_part.definition.assign(S)
    children, block_map = [], {}
    for c in range(int(cells.max()) + 1):
        rows = np.flatnonzero(cells == c)
        if len(rows) >= 2 * c_B:
            tree, _ = cv_tree(F_train[rows], y[rows], c_B, derive(seed, 5, c), criterion=criterion)
            tree = tree_prune_to_min_leaf(tree, F_upd[rows], c_B)
        else:
            tree = cart_fit(F_train[rows], y[rows], 0, 1)
        children.append(TreeDefinition(tree, selected.names))
        for leaf in range(tree.n_leaves):
            block_map[(c, leaf)] = len(block_map)
    k = len(seed_names)
    definition = ComposedDefinition(
        seed=seed_part.definition,
        children=tuple(children),
        seed_cols=tuple(range(k)),
        child_cols=tuple(range(k, k + F_train.shape[1])),
        block_map=block_map,
        feature_names=tuple(seed_names) + tuple(selected.names),
    )
    features = np.column_stack([S, F_upd])
    train_blocks = definition.assign(np.column_stack([S, F_train]))
    return definition, definition.assign(features), features, train_blocks
