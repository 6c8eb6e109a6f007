"""K-fold machinery for hyperparameter tuning and model comparison."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .errors import BadK, FoldError

DEFAULT_FOLDS = 5


@dataclass(frozen=True, eq=False)
class FoldPlan:
    assignments: np.ndarray
    K: int
    seed: int

    @property
    def n(self) -> int:
        return len(self.assignments)

    def folds(self):
        """Yield ``(fold, train_idx, test_idx)``."""
        for f in range(self.K):
            test = np.flatnonzero(self.assignments == f)
            train = np.flatnonzero(self.assignments != f)
            yield f, train, test


def kfold_split(n: int, K: int = DEFAULT_FOLDS, seed: int = 0) -> FoldPlan:
    """Random partition of ``range(n)`` into K folds whose sizes differ by at most one."""
    if not 2 <= K <= n:
        raise BadK(f"need 2 <= K <= n, got K={K}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[perm] = np.arange(n) % K
    assignments.setflags(write=False)
    return FoldPlan(assignments=assignments, K=K, seed=seed)


@dataclass(frozen=True, eq=False)
class CVResult:
    grid: list
    mspe: np.ndarray
    mspe_se: np.ndarray
    chosen: int
    rule: str = "min"

    @property
    def best(self):
        return self.grid[self.chosen]


def select_index(mspe, mspe_se, rule: str = "min") -> int:
    """Pick a grid index; the grid is assumed ordered by increasing complexity.

    ``min`` takes the lowest MSPE (first on ties); ``1se`` the simplest value
    whose MSPE is within one standard error of the minimum.
    """
    mspe = np.asarray(mspe, dtype=float)
    best = int(np.argmin(mspe))
    if rule == "min":
        return best
    if rule == "1se":
        limit = mspe[best] + float(np.asarray(mspe_se, dtype=float)[best])
        return int(np.flatnonzero(mspe <= limit)[0])
    raise ValueError(f"unknown rule {rule!r}")


def cv_predict(fit_predict: Callable, X, y, plan: FoldPlan) -> np.ndarray:
    """Out-of-fold predictions; ``fit_predict(X_tr, y_tr, X_te)`` returns predictions."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    pred = np.full(len(y), np.nan)
    for f, tr, te in plan.folds():
        try:
            pred[te] = fit_predict(X[tr], y[tr], X[te])
        except FoldError:
            raise
        except Exception as exc:
            raise FoldError(f, exc) from exc
    return pred


def cv_tune(
    fitter: Callable[[Any, np.ndarray, np.ndarray], Any],
    X,
    y,
    grid: Sequence,
    plan: FoldPlan,
    rule: str = "min",
) -> CVResult:
    """Cross-validated MSPE for each grid value.

    ``fitter(value, X_train, y_train)`` returns a model with ``predict``; the
    grid must be ordered from simplest to most complex.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty grid")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    sq = np.empty((len(grid), len(y)))
    for g, value in enumerate(grid):
        for f, tr, te in plan.folds():
            try:
                model = fitter(value, X[tr], y[tr])
                sq[g, te] = (y[te] - model.predict(X[te])) ** 2
            except Exception as exc:
                raise FoldError(f, exc) from exc
    fold_means = np.array(
        [[sq[g, plan.assignments == f].mean() for f in range(plan.K)] for g in range(len(grid))]
    )
    mspe = sq.mean(axis=1)
    se = fold_means.std(axis=1, ddof=1) / np.sqrt(plan.K)
    return CVResult(grid=grid, mspe=mspe, mspe_se=se, chosen=select_index(mspe, se, rule), rule=rule)
