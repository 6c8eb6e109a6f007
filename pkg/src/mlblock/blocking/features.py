"""Feature frames for the two learned strategies.

With pre-periods ``p1 < ... < pm`` the *training* frame predicts ``y_pm``
from the lags ``p1..p(m-1)``; the *updated* frame shifts every lag one
period forward (``p2..pm``) to place units for the coming period. With two
pre-periods this is the pre1 -> pre2 setup, with three it is the look-ahead
variant targeting pre3.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import PanelDataset
from ..errors import TooFewPeriods
from ..mlcore.forest import DEFAULT_N_TREES, Forest, forest_fit
from ..seeds import derive

TRAIN = "train"
UPDATED = "updated"


@dataclass(frozen=True)
class LagLayout:
    target: str
    train_lags: tuple  # most recent first
    updated_lags: tuple

    def lags(self, frame: str) -> tuple:
        return self.train_lags if frame == TRAIN else self.updated_lags


def lag_layout(panel: PanelDataset, periods=None) -> LagLayout:
    pre = tuple(periods) if periods is not None else panel.pre_periods
    if len(pre) < 2:
        raise TooFewPeriods(f"need at least 2 pre-periods, have {list(pre)}")
    return LagLayout(
        target=pre[-1],
        train_lags=tuple(reversed(pre[:-1])),
        updated_lags=tuple(reversed(pre[1:])),
    )


def _lag_name(prefix: str, j: int) -> str:
    return f"{prefix}_pre" if j == 0 else f"{prefix}_pre_lag{j + 1}"


@dataclass(frozen=True, eq=False)
class VSFeatureMap:
    """Columns ``y_pre*``, ``yhat_pre*``, covariates and time-varying values.

    ``yhat`` for a period comes from a forest of that period's outcome on the
    static covariates; for the fitting units it is the out-of-bag prediction.
    """

    layout: LagLayout
    forests: dict
    include_yhat: bool
    names: tuple
    fit_ids: tuple

    @classmethod
    def fit(cls, panel: PanelDataset, layout: LagLayout, include_yhat: bool = True,
            n_trees: int = DEFAULT_N_TREES, seed: int = 0) -> "VSFeatureMap":
        m = len(layout.train_lags)
        forests = {}
        if include_yhat:
            for i, p in enumerate([layout.target, *layout.train_lags]):
                forests[p] = forest_fit(panel.covariates, panel.outcome(p), n_trees=n_trees, seed=derive(seed, 1, i))
        names = [_lag_name("y", j) for j in range(m)]
        if include_yhat:
            names += [_lag_name("yhat", j) for j in range(m)]
        names += list(panel.covariate_names) + [f"{z}_pre" for z in panel.time_varying_names]
        return cls(layout, forests, include_yhat, tuple(names), panel.unit_ids)

    def _yhat(self, panel: PanelDataset, period: str) -> np.ndarray:
        forest: Forest = self.forests[period]
        if panel.unit_ids == self.fit_ids:
            return forest.fitted()
        return forest.predict(panel.covariates)

    def matrix(self, panel: PanelDataset, frame: str) -> np.ndarray:
        lags = self.layout.lags(frame)
        cols = [panel.outcome(p) for p in lags]
        if self.include_yhat:
            cols += [self._yhat(panel, p) for p in lags]
        cols += list(panel.covariates.T)
        cols += list(panel.z(lags[0]).T)
        return np.column_stack(cols) if cols else np.empty((panel.n, 0))


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """Future prognostic score: a forest of the next outcome on covariates,
    lagged outcomes and current time-varying covariates."""

    layout: LagLayout
    forest: Forest
    fit_ids: tuple

    @classmethod
    def fit(cls, panel: PanelDataset, layout: LagLayout, n_trees: int = DEFAULT_N_TREES,
            seed: int = 0) -> "ScoreMap":
        X = _score_inputs(panel, layout.train_lags)
        forest = forest_fit(X, panel.outcome(layout.target), n_trees=n_trees, seed=derive(seed, 2))
        return cls(layout, forest, panel.unit_ids)

    def scores(self, panel: PanelDataset, frame: str) -> np.ndarray:
        if frame == TRAIN and panel.unit_ids == self.fit_ids:
            return self.forest.fitted()
        return self.forest.predict(_score_inputs(panel, self.layout.lags(frame)))


def _score_inputs(panel: PanelDataset, lags) -> np.ndarray:
    cols = list(panel.covariates.T) + [panel.outcome(p) for p in lags] + list(panel.z(lags[0]).T)
    return np.column_stack(cols)
