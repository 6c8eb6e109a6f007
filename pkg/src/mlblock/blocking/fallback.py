"""Partitions for panels with too little pre-period history."""
from __future__ import annotations

import numpy as np

from ..dataset import PanelDataset, standardize
from ..errors import ModeDataMismatch, SingularDesign
from ..mlcore.cart import Tree, tree_prune_to_min_leaf
from ..mlcore.lasso import lasso_cv, post_lasso_importance
from ..mlcore.pca import pca_reduce
from ..seeds import derive
from .grid import adaptive_grid, equal_grid
from .partition import Partition, TreeDefinition

MODES = ("single_pre", "zero_pre", "auxiliary")
WEIGHT_RULES = ("sum", "mean")


def pre_weight(x_weights, rule: str) -> float:
    """Weight given to the lone pre-period outcome from the selected
    covariates' weights."""
    w = np.asarray(list(x_weights), dtype=float)
    if rule not in WEIGHT_RULES:
        raise ValueError(f"weight_rule must be one of {WEIGHT_RULES}, got {rule!r}")
    if not len(w):
        return 1.0
    return float(w.sum() if rule == "sum" else w.mean())


def fallback_blocking(
    panel: PanelDataset,
    mode: str,
    aux_partition=None,
    weight_rule: str = "sum",
    c_B: int = 4,
    seed: int = 0,
    budget=None,
) -> Partition:
    """``single_pre``: Lasso-screen covariates against the one pre-period
    outcome and grid over that outcome plus the survivors. ``zero_pre``:
    equal quantile grid over principal components of the covariates.
    ``auxiliary``: carry a tree learned elsewhere over to this panel and
    prune it to ``c_B``."""
    if mode == "single_pre":
        return _single_pre(panel, weight_rule, c_B, seed, budget)
    if mode == "zero_pre":
        return _zero_pre(panel, c_B)
    if mode == "auxiliary":
        return _auxiliary(panel, aux_partition, c_B)
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _single_pre(panel, weight_rule, c_B, seed, budget):
    if not panel.pre_periods:
        raise ModeDataMismatch("single_pre needs a pre-period outcome")
    label = panel.pre_periods[-1]
    y = panel.outcome(label)
    names, w = [], []
    if panel.K:
        Z, _ = standardize(panel.covariates)
        model, _ = lasso_cv(Z, y, seed=derive(seed, 6))
        idx = list(model.selected)
        try:
            wts = post_lasso_importance(Z, y, idx).weights
            w = [wts[k] for k in idx]
        except SingularDesign:
            w = [abs(model.coefficients[k]) for k in idx]
        names = [panel.covariate_names[k] for k in idx]
    weights = [pre_weight(w, weight_rule), *w]
    feature_names = (label, *names)
    part = adaptive_grid(
        panel.feature_matrix(feature_names), weights, budget, c_B, y=y,
        feature_names=feature_names, seed=derive(seed, 7),
    )
    part.info.update(strategy="fallback", mode="single_pre", weight_rule=weight_rule,
                     weights=[float(v) for v in weights])
    return part


def _zero_pre(panel, c_B):
    if not panel.K:
        raise ModeDataMismatch("zero_pre needs static covariates")
    Z, _ = standardize(panel.covariates)
    pca = pca_reduce(Z, "elbow")
    # too many components leave no room for even two bins each: drop the weakest
    for k in range(pca.k, 0, -1):
        part = equal_grid(pca.scores[:, :k], c_B, tuple(f"pc{j + 1}" for j in range(k)))
        if part.info["bins"][0] > 1:
            break
    part.info.update(strategy="fallback", mode="zero_pre", components=k)
    return part


def _auxiliary(panel, aux, c_B):
    if isinstance(aux, Partition):
        aux = aux.definition
    if isinstance(aux, Tree):
        aux = TreeDefinition(aux, panel.covariate_names)
    if not isinstance(aux, TreeDefinition):
        raise ModeDataMismatch("auxiliary mode needs a tree partition from the auxiliary sample")
    F = panel.feature_matrix(aux.feature_names)
    tree = tree_prune_to_min_leaf(aux.tree, F, c_B)
    definition = TreeDefinition(tree, aux.feature_names)
    return Partition(definition.assign(F), definition, c_B, features=F,
                     info={"strategy": "fallback", "mode": "auxiliary"}).check()
