"""Choosing among design strategies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import assign_within_blocks, rerandomize
from .cv import DEFAULT_FOLDS, kfold_split
from .dataset import PanelDataset
from .errors import MissingPre3, TooSmallForSplit
from .estimation import ols_block_estimate
from .report import write_csv, write_markdown
from .seeds import derive

DEFAULT_REPEATS = 10


@dataclass(frozen=True)
class StrategyScore:
    strategy: str
    criterion: str  # pre3_mspe | cv_mspe | tradeoff | pre3_balance
    value: float
    rank: int = 0
    components: tuple | None = None  # (avg_mse, avg_se), tradeoff only
    n_repeats: int | None = None
    se: float | None = None
    b: int | None = None


def _items(candidates):
    if isinstance(candidates, dict):
        return list(candidates.items())
    return [c if isinstance(c, tuple) else (f"candidate_{i}", c) for i, c in enumerate(candidates)]


def _rank(scores, tie_key=None) -> list[StrategyScore]:
    idx = sorted(range(len(scores)), key=lambda i: (scores[i].value, tie_key(scores[i]) if tie_key else 0, i))
    out = []
    for r, i in enumerate(idx, start=1):
        s = scores[i]
        out.append(StrategyScore(s.strategy, s.criterion, s.value, r, s.components, s.n_repeats, s.se, s.b))
    return out


def _target(panel: PanelDataset, target: str) -> np.ndarray:
    if not panel.has(target):
        raise MissingPre3(f"panel has no {target!r} outcome")
    return panel.outcome(target)


def block_mean_predict(y_train, blocks_train, blocks_test) -> np.ndarray:
    """Predict by training block means; blocks with no training units fall
    back to the overall training mean."""
    nb = int(max(blocks_train.max(initial=0), blocks_test.max(initial=0))) + 1
    cnt = np.bincount(blocks_train, minlength=nb)
    tot = np.bincount(blocks_train, weights=y_train, minlength=nb)
    means = np.where(cnt > 0, tot / np.maximum(cnt, 1), y_train.mean())
    return means[blocks_test]


def pre3_mspe(block_of, y, plan) -> float:
    blocks = np.asarray(block_of, dtype=np.int64)
    sq = np.empty(len(y))
    for _, tr, te in plan.folds():
        sq[te] = (y[te] - block_mean_predict(y[tr], blocks[tr], blocks[te])) ** 2
    return float(sq.mean())


def compare_on_pre3(partitions, panel: PanelDataset, folds: int = DEFAULT_FOLDS, seed: int = 0,
                    target: str = "pre3") -> list[StrategyScore]:
    """Rank partitions by K-fold MSPE of block-mean predictions of the
    held-back outcome. Block means use training folds only; ties go to fewer
    blocks."""
    y = _target(panel, target)
    plan = kfold_split(panel.n, min(folds, panel.n), derive(seed, 30))
    scores = [
        StrategyScore(name, "pre3_mspe", pre3_mspe(p.block_of, y, plan), b=p.b)
        for name, p in _items(partitions)
    ]
    return _rank(scores, tie_key=lambda s: s.b)


def _holdout_mspe(part, train: PanelDataset, test: PanelDataset, target: str) -> float:
    frame = part.training_frame
    if frame is None:
        if part.b != 1:
            raise ValueError("partition has no training frame for out-of-sample scoring")
        blocks_tr, blocks_te = np.zeros(train.n, dtype=np.int64), np.zeros(test.n, dtype=np.int64)
    else:
        blocks_tr, blocks_te = np.asarray(frame.block_of), np.asarray(frame.assign(test))
    y_tr, y_te = train.outcome(target), test.outcome(target)
    return float(np.mean((y_te - block_mean_predict(y_tr, blocks_tr, blocks_te)) ** 2))


def compare_by_cv(builders, panel: PanelDataset, n_repeats: int = DEFAULT_REPEATS, seed: int = 0,
                  c_B: int = 4, target: str | None = None) -> list[StrategyScore]:
    """Repeated, symmetrized 2-fold CV of whole design pipelines.

    ``builders`` map names to ``f(panel, seed) -> Partition``. Each builder
    is rerun from scratch on one half and its training-frame blocks predict
    the other half's latest pre-period outcome by block means.
    """
    n = panel.n
    if n // 2 < 2 * c_B:
        raise TooSmallForSplit(f"halves of n={n} are smaller than 2*c_B={2 * c_B}")
    target = target or panel.pre_periods[-1]
    items = _items(builders)
    per_rep = np.zeros((len(items), n_repeats))
    for r in range(n_repeats):
        perm = np.random.default_rng(derive(seed, 40, r)).permutation(n)
        halves = (np.sort(perm[: n // 2]), np.sort(perm[n // 2:]))
        for side in (0, 1):
            train, test = panel.subset(halves[side]), panel.subset(halves[1 - side])
            s = derive(seed, 41, r, side)
            for i, (_, build) in enumerate(items):
                per_rep[i, r] += 0.5 * _holdout_mspe(build(train, s), train, test, target)
    scores = [
        StrategyScore(name, "cv_mspe", float(per_rep[i].mean()), n_repeats=n_repeats,
                      se=float(per_rep[i].std(ddof=1) / np.sqrt(n_repeats)) if n_repeats > 1 else None)
        for i, (name, _) in enumerate(items)
    ]
    return _rank(scores)


def placebo_moments(block_of, y, S: int, seed: int) -> tuple[float, float]:
    """Mean squared estimate and mean standard error over ``S`` placebo
    blocked assignments (draw ``s`` uses ``derive(seed, s)``)."""
    b2 = se = 0.0
    for s in range(S):
        a = assign_within_blocks(block_of, derive(seed, s))
        est = ols_block_estimate(y, a.d, block_of)
        b2 += est.beta_hat**2
        se += est.se
    return b2 / S, se / S


def tradeoff_select_pre3(candidates, panel: PanelDataset, S: int = 1000, weight: float = 0.5,
                         seed: int = 0, target: str = "pre3"):
    """Score ``weight * MSE/MSE_0 + (1 - weight) * SE/SE_0`` from placebo
    draws on the held-back outcome; ``_0`` is complete randomization. All
    candidates share the same draw seeds. Returns ``(scores, chosen)``."""
    if not 0 <= weight <= 1:
        raise ValueError("weight must lie in [0, 1]")
    if S < 1:
        raise ValueError("S must be >= 1")
    y = _target(panel, target)
    base_mse, base_se = placebo_moments(np.zeros(panel.n, dtype=np.int64), y, S, seed)
    scores, parts = [], {}
    for name, p in _items(candidates):
        mse, se = placebo_moments(p.block_of, y, S, seed)
        value = 1.0 + weight * (mse / base_mse - 1.0) + (1.0 - weight) * (se / base_se - 1.0)
        scores.append(StrategyScore(name, "tradeoff", value, components=(mse, se), n_repeats=S, b=p.b))
        parts[name] = p
    ranked = _rank(scores, tie_key=lambda s: s.b)
    return ranked, parts[ranked[0].strategy]


def compare_rerandomization_pre3(criteria, panel: PanelDataset, S: int = 100, mode: str = "minmax",
                                 R: int = 1000, alpha: float = 0.05, seed: int = 0,
                                 target: str = "pre3") -> list[StrategyScore]:
    """Rank balance criteria by the average absolute arm difference in the
    held-back outcome over ``S`` rerandomized assignments."""
    y = _target(panel, target)
    scores = []
    for name, crit in _items(criteria):
        gap = 0.0
        for s in range(S):
            a, _ = rerandomize(crit, mode, R=R, alpha=alpha, seed=derive(seed, 50, s))
            d = a.d.astype(bool)
            gap += abs(y[d].mean() - y[~d].mean())
        scores.append(StrategyScore(name, "pre3_balance", gap / S, n_repeats=S))
    return _rank(scores)


SCORE_HEADER = ["strategy", "criterion", "score", "rank", "avg_mse", "avg_se", "n_repeats", "se"]


def score_rows(scores):
    for s in scores:
        mse, se = s.components if s.components else (None, None)
        yield [s.strategy, s.criterion, s.value, s.rank, mse, se, s.n_repeats, s.se]


def write_scores(scores, csv_path, md_path=None) -> None:
    rows = list(score_rows(scores))
    write_csv(csv_path, SCORE_HEADER, rows)
    if md_path:
        write_markdown(md_path, SCORE_HEADER, rows, title="Strategy comparison")


__all__ = [
    "StrategyScore",
    "block_mean_predict",
    "compare_by_cv",
    "compare_on_pre3",
    "compare_rerandomization_pre3",
    "placebo_moments",
    "tradeoff_select_pre3",
    "write_scores",
]
