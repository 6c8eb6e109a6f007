"""Future Prognostic Score blocking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cv import DEFAULT_FOLDS, kfold_split
from ..dataset import PanelDataset
from ..errors import TooFewUnits
from ..mlcore.forest import DEFAULT_N_TREES
from ..seeds import derive
from .allocate import _sort, _threshold, optimize_cuts, scaled_cuts, sequential_cuts
from .features import TRAIN, UPDATED, ScoreMap, lag_layout
from .partition import ComposedDefinition, IntervalDefinition, Partition, TrainingFrame

ALLOCATORS = ("sequential", "scaled", "optimized")
MAX_B = 64


@dataclass(frozen=True, eq=False)
class PrognosticScores:
    scores: np.ndarray
    model: ScoreMap


def fps_scores(panel: PanelDataset, seed: int = 0, n_trees: int = DEFAULT_N_TREES, periods=None) -> PrognosticScores:
    """Scores from the next-outcome forest applied to updated features."""
    smap = ScoreMap.fit(panel, lag_layout(panel, periods), n_trees=n_trees, seed=seed)
    return PrognosticScores(smap.scores(panel, UPDATED), smap)


def _cuts(allocator, scores, y_target, b, c_B):
    s, order, vals = _sort(scores)
    if allocator == "sequential":
        cuts = sequential_cuts(vals, c_B)
    elif allocator == "scaled":
        cuts = scaled_cuts(vals, b, c_B)
    elif allocator == "optimized":
        cuts = optimize_cuts(vals, np.asarray(y_target, dtype=float)[order], b, c_B)[0]
    else:
        raise ValueError(f"unknown allocator {allocator!r}; expected one of {ALLOCATORS}")
    return np.array([_threshold(vals, p) for p in cuts], dtype=float)


def choose_block_count(panel, allocator, c_B, seed, n_trees, folds=DEFAULT_FOLDS, b_grid=None, periods=None):
    """Two-stage CV over the number of blocks.

    For each fold the score model and the partition are learned on the other
    folds; a held-out unit is placed by its score interval and predicted by
    the mean training score of that block. Returns ``(best_b, grid, mspe)``.
    """
    layout = lag_layout(panel, periods)
    n = panel.n
    plan = kfold_split(n, min(folds, n), derive(seed, 10))
    n_train_min = min(len(tr) for _, tr, _ in plan.folds())
    top = max(1, min(n_train_min // c_B, MAX_B))
    grid = [b for b in (b_grid or range(1, top + 1)) if 1 <= b <= top]
    sq = np.zeros((len(grid), n))
    for f, tr, te in plan.folds():
        sub, held = panel.subset(tr), panel.subset(te)
        smap = ScoreMap.fit(sub, layout, n_trees=n_trees, seed=derive(seed, 11, f))
        s_tr = smap.scores(sub, TRAIN)
        y_tr = sub.outcome(layout.target)
        s_te = smap.scores(held, TRAIN)
        y_te = held.outcome(layout.target)
        for g, b in enumerate(grid):
            cuts = _cuts(allocator, s_tr, y_tr, b, c_B)
            blk_tr = np.searchsorted(cuts, s_tr, side="right")
            means = np.bincount(blk_tr, weights=s_tr, minlength=len(cuts) + 1) / np.maximum(
                np.bincount(blk_tr, minlength=len(cuts) + 1), 1
            )
            sq[g, te] = (y_te - means[np.searchsorted(cuts, s_te, side="right")]) ** 2
    mspe = sq.mean(axis=1)
    return grid[int(np.argmin(mspe))], grid, mspe


def fps_blocking(
    panel: PanelDataset,
    allocator: str = "sequential",
    c_B: int = 4,
    seed: int = 0,
    n_trees: int = DEFAULT_N_TREES,
    folds: int = DEFAULT_FOLDS,
    b_grid=None,
    subgroup_seed: Partition | None = None,
    periods=None,
) -> Partition:
    """Block on future prognostic scores.

    ``sequential`` cuts groups of ``c_B``; ``scaled`` and ``optimized`` use a
    block count chosen by two-stage CV. The final cuts are placed on the
    updated scores; ``optimized`` then uses those scores as its target.
    """
    if allocator not in ALLOCATORS:
        raise ValueError(f"unknown allocator {allocator!r}; expected one of {ALLOCATORS}")
    layout = lag_layout(panel, periods)
    if panel.n < c_B:
        raise TooFewUnits(f"n={panel.n} < c_B={c_B}")
    smap = ScoreMap.fit(panel, layout, n_trees=n_trees, seed=seed)
    s_upd = smap.scores(panel, UPDATED)
    s_train = smap.scores(panel, TRAIN)
    y = panel.outcome(layout.target)
    info = {"strategy": "fps", "allocator": allocator}
    b = None
    if allocator != "sequential":
        b, grid, mspe = choose_block_count(panel, allocator, c_B, seed, n_trees, folds, b_grid, periods)
        b = min(b, panel.n // c_B)
        info.update(b_cv=b, b_grid=[int(v) for v in grid], cv_mspe=[float(v) for v in mspe])
    tag = f"forest({'+'.join(layout.updated_lags)})"

    if subgroup_seed is not None:
        return _fps_refine_seed(panel, subgroup_seed, smap, s_upd, s_train, y, allocator, b, c_B, info, tag)

    train_cuts = _cuts(allocator, s_train, y, b, c_B)
    upd_cuts = _cuts(allocator, s_upd, s_upd, b, c_B)
    definition = IntervalDefinition(upd_cuts, ("fps",), tag)
    train_def = IntervalDefinition(train_cuts, ("fps",), tag)

    def assign_train(p, smap=smap, train_def=train_def):
        return train_def.assign(smap.scores(p, TRAIN))

    return Partition(
        definition.assign(s_upd), definition, c_B, features=s_upd[:, None],
        training_frame=TrainingFrame(train_def.assign(s_train), assign_train), info=info,
    ).check()


def _fps_refine_seed(panel, seed_part, smap, s_upd, s_train, y, allocator, b, c_B, info, tag):
    seed_names = list(seed_part.definition.feature_names)
    S = panel.feature_matrix(seed_names)
    cells = seed_part.definition.assign(S)
    children, train_children, block_map = [], [], {}
    for c in range(int(cells.max()) + 1):
        rows = np.flatnonzero(cells == c)
        b_c = None if b is None else max(1, min(round(b * len(rows) / panel.n), len(rows) // c_B))
        cuts = _cuts(allocator, s_upd[rows], s_upd[rows], b_c, c_B)
        children.append(IntervalDefinition(cuts, ("fps",), tag))
        train_children.append(IntervalDefinition(_cuts(allocator, s_train[rows], y[rows], b_c, c_B), ("fps",), tag))
        for j in range(len(cuts) + 1):
            block_map[(c, j)] = len(block_map)
    k = len(seed_names)
    names = tuple(seed_names) + ("fps",)

    def composed(kids):
        return ComposedDefinition(seed_part.definition, tuple(kids), tuple(range(k)), (k,), block_map, names)

    definition, train_def = composed(children), composed(train_children)
    features = np.column_stack([S, s_upd])

    def assign_train(p, smap=smap, train_def=train_def, seed_names=seed_names):
        return train_def.assign(np.column_stack([p.feature_matrix(seed_names), smap.scores(p, TRAIN)]))

    info = dict(info, subgroup_seed=True)
    return Partition(
        definition.assign(features), definition, c_B, features=features,
        training_frame=TrainingFrame(train_def.assign(np.column_stack([S, s_train])), assign_train),
        info=info,
    ).check()


__all__ = ["PrognosticScores", "fps_scores", "fps_blocking", "choose_block_count"]
