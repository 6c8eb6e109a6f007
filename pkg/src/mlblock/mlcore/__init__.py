from .cart import SplitScore, Tree, cart_fit, cells_from_blocks, emse_score, tree_prune_to_min_leaf
from .forest import Forest, forest_fit
from .lasso import ImportanceWeights, LinearModel, lasso_fit, lambda_grid, post_lasso_importance
from .pca import PCAResult, pca_reduce

__all__ = [
    "Forest",
    "ImportanceWeights",
    "LinearModel",
    "PCAResult",
    "SplitScore",
    "Tree",
    "cart_fit",
    "cells_from_blocks",
    "emse_score",
    "forest_fit",
    "lambda_grid",
    "lasso_fit",
    "pca_reduce",
    "post_lasso_importance",
    "tree_prune_to_min_leaf",
]
