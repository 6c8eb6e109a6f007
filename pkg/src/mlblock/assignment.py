"""Turning a design into treatment indicators: blocked, paired, rerandomized."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import DegenerateArms, OddN
from .estimation import t_matrix
from .seeds import derive

ODD_POLICIES = ("random_holdout", "error")


@dataclass(frozen=True, eq=False)
class TreatmentAssignment:
    """``d`` in {0,1}; ``group_of`` is the block or pair id each unit was
    randomized in (rerandomized designs use a single group)."""

    d: np.ndarray
    misfit: np.ndarray
    group_of: np.ndarray
    method: dict
    seed: int

    @property
    def n(self) -> int:
        return len(self.d)

    @property
    def n_treated(self) -> int:
        return int(self.d.sum())

    def rows(self, unit_ids=None):
        ids = unit_ids if unit_ids is not None else range(self.n)
        for u, a, g, m in zip(ids, self.d, self.group_of, self.misfit):
            yield {"unit_id": u, "arm": int(a), "block_or_pair_id": int(g), "misfit_flag": int(bool(m))}

    def to_csv(self, path, unit_ids=None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["unit_id", "arm", "block_or_pair_id", "misfit_flag"], lineterminator="\n")
            w.writeheader()
            w.writerows(self.rows(unit_ids))


def _block_vector(partition) -> np.ndarray:
    return np.asarray(getattr(partition, "block_of", partition), dtype=np.int64)


def assign_within_blocks(partition, seed: int = 0, first_misfit_arm: int | None = None) -> TreatmentAssignment:
    """Split every block evenly by a seeded shuffle.

    In an odd block one random unit is the misfit; misfits take alternating
    arms in block-id order (leaf or interval order), the first one's arm
    being a coin flip from ``seed`` unless ``first_misfit_arm`` is given.
    """
    blocks = _block_vector(partition)
    n = len(blocks)
    rng = np.random.default_rng(seed)
    coin = int(rng.integers(2))
    if first_misfit_arm is not None:
        coin = int(first_misfit_arm)
    order = np.lexsort((rng.random(n), blocks))
    sizes = np.bincount(blocks)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    sb = blocks[order]
    rank = np.arange(n) - starts[sb]
    half = sizes[sb] // 2
    d = np.zeros(n, dtype=np.int8)
    misfit = np.zeros(n, dtype=bool)
    d[order[rank < half]] = 1
    odd_pos = rank == 2 * half  # only exists in odd blocks: the last shuffled unit
    mis_units = order[odd_pos]
    misfit[mis_units] = True
    # mis_units are in block order because ``order`` sorts by block first
    d[mis_units] = (coin + np.arange(len(mis_units))) % 2
    return TreatmentAssignment(d, misfit, blocks.copy(), {"kind": "blocked", "first_misfit_arm": coin}, seed)


def _scaled(X, weights):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    sd = X.std(axis=0, ddof=1) if len(X) > 1 else np.ones(X.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    w = np.ones(X.shape[1]) if weights is None else np.abs(np.asarray(weights, dtype=float))
    return (X - X.mean(axis=0)) / sd * w


def greedy_pairs(X, weights=None, seed: int = 0) -> list[tuple[int, int]]:
    """Visit units in a seeded random order; pair each unpaired unit with
    its nearest unpaired neighbor (importance-scaled Euclidean distance,
    ties to the lower index)."""
    Z = _scaled(X, weights)
    n = len(Z)
    free = np.ones(n, dtype=bool)
    pairs = []
    for i in np.random.default_rng(seed).permutation(n):
        if not free[i]:
            continue
        free[i] = False
        cand = np.flatnonzero(free)
        if not len(cand):
            free[i] = True
            break
        dist = np.sum((Z[cand] - Z[i]) ** 2, axis=1)
        j = int(cand[np.argmin(dist)])
        free[j] = False
        pairs.append((int(min(i, j)), int(max(i, j))))
    return pairs


def score_pairs(scores) -> list[tuple[int, int]]:
    """Consecutive pairs in score order (ties by index)."""
    s = np.asarray(scores, dtype=float)
    order = np.lexsort((np.arange(len(s)), s))
    return [(int(order[k]), int(order[k + 1])) for k in range(0, len(s) - 1, 2)]


def pairwise_match(
    X,
    strategy: str = "vs",
    weights=None,
    seed: int = 0,
    odd: str = "random_holdout",
    holdout: int | None = None,
) -> tuple[list[tuple[int, int]], TreatmentAssignment]:
    """Pair units and treat one per pair at random.

    ``strategy="vs"``: greedy nearest-available matching on the columns of
    ``X`` scaled by ``weights``. ``strategy="fps"``: ``X`` is a score vector
    and pairs are consecutive in score order. With odd ``n`` one unit
    (``holdout`` or a random one) is left out, flagged misfit and given a
    random arm; ``odd="error"`` raises instead.
    """
    X = np.asarray(X, dtype=float)
    n = len(X)
    if odd not in ODD_POLICIES:
        raise ValueError(f"odd must be one of {ODD_POLICIES}")
    rng = np.random.default_rng(derive(seed, 0))
    keep = np.arange(n)
    if n % 2:
        if odd == "error" and holdout is None:
            raise OddN(f"n={n} is odd")
        holdout = int(rng.integers(n)) if holdout is None else int(holdout)
        keep = np.delete(keep, holdout)
    elif holdout is not None:
        raise OddN("holdout given but n is even")
    if strategy == "vs":
        local = greedy_pairs(X[keep], weights, derive(seed, 1))
    elif strategy == "fps":
        local = score_pairs(X[keep] if X.ndim == 1 else X[keep, 0])
    else:
        raise ValueError(f"strategy must be vs or fps, got {strategy!r}")
    pairs = sorted((int(keep[a]), int(keep[b])) for a, b in local)
    d = np.zeros(n, dtype=np.int8)
    misfit = np.zeros(n, dtype=bool)
    group = np.full(n, len(pairs), dtype=np.int64)
    flips = rng.integers(2, size=len(pairs))
    for g, ((a, b), f) in enumerate(zip(pairs, flips)):
        d[b if f else a] = 1
        group[a] = group[b] = g
    if holdout is not None:
        misfit[holdout] = True
        d[holdout] = int(rng.integers(2))
    method = {"kind": "paired", "strategy": strategy, "holdout": holdout}
    return pairs, TreatmentAssignment(d, misfit, group, method, seed)


@dataclass(frozen=True, eq=False)
class Criterion:
    """Balance target: columns ``X`` with importance ``weights``. The
    score criterion is a single column with weight 1."""

    X: np.ndarray
    weights: np.ndarray
    kind: str = "vs"

    @classmethod
    def vs(cls, X, weights=None) -> "Criterion":
        X = np.asarray(X, dtype=float)
        X = X[:, None] if X.ndim == 1 else X
        w = np.ones(X.shape[1]) if weights is None else np.abs(np.asarray(weights, dtype=float))
        if len(w) != X.shape[1]:
            raise ValueError("one weight per column")
        return cls(X, w, "vs")

    @classmethod
    def fps(cls, scores) -> "Criterion":
        return cls(np.asarray(scores, dtype=float)[:, None], np.ones(1), "fps")

    def weighted_max(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        on = self.weights > 0  # zero weight silences even an infinite theta
        a = np.zeros(theta.shape)
        a[:, on] = np.abs(theta[:, on]) * self.weights[on]
        return a.max(axis=1) if a.shape[1] else np.zeros(len(a))


@dataclass(frozen=True, eq=False)
class BalanceStats:
    theta: np.ndarray  # R x K t-statistics
    weighted_max: np.ndarray  # R-vector max_k w_k |theta_rk|
    chosen: int

    def to_csv(self, path, names=None) -> None:
        K = self.theta.shape[1]
        names = list(names or (f"theta_{k}" for k in range(K)))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["draw", *names, "weighted_max", "chosen"])
            for r, row in enumerate(self.theta):
                w.writerow([r, *(repr(float(v)) for v in row), repr(float(self.weighted_max[r])), int(r == self.chosen)])


def complete_draw(n: int, seed: int) -> np.ndarray:
    """``n // 2`` treated units chosen uniformly."""
    d = np.zeros(n, dtype=np.int8)
    d[np.random.default_rng(seed).permutation(n)[: n // 2]] = 1
    return d


def rerandomize(
    criterion: Criterion,
    mode: str = "minmax",
    R: int = 1000,
    alpha: float = 0.05,
    max_draws: int = 1000,
    seed: int = 0,
) -> tuple[TreatmentAssignment, BalanceStats]:
    """Pick a complete randomization by covariate balance.

    ``minmax`` scores ``R`` draws and keeps the one minimizing
    ``max_k w_k |theta_k|``. ``bigstick`` redraws until every weighted
    variable passes a two-sided Welch test at level ``alpha``; after
    ``max_draws`` it returns the best draw so far with ``converged=False``.
    Draw ``r`` uses seed ``derive(seed, r)``.
    """
    n = len(criterion.X)
    if n < 2:
        raise DegenerateArms("need at least two units")
    if mode == "minmax":
        if R < 1:
            raise ValueError("R must be >= 1")
        D = np.stack([complete_draw(n, derive(seed, r)) for r in range(R)])
        theta = t_matrix(criterion.X, D)
        wmax = criterion.weighted_max(theta)
        r_star = int(np.argmin(wmax))
        method = {"kind": "rerandomized", "mode": "minmax", "R": R, "chosen": r_star}
    elif mode == "bigstick":
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        crit = NormalDist().inv_cdf(1 - alpha / 2)
        draws, thetas = [], []
        converged = False
        for r in range(max_draws):
            d = complete_draw(n, derive(seed, r))
            th = t_matrix(criterion.X, d[None, :])
            draws.append(d)
            thetas.append(th[0])
            active = criterion.weights > 0
            if np.all(np.abs(th[0][active]) < crit):
                converged = True
                break
        D, theta = np.stack(draws), np.stack(thetas)
        wmax = criterion.weighted_max(theta)
        r_star = len(draws) - 1 if converged else int(np.argmin(wmax))
        method = {"kind": "rerandomized", "mode": "bigstick", "alpha": alpha, "draws": len(draws),
                  "chosen": r_star, "converged": converged}
    else:
        raise ValueError(f"mode must be minmax or bigstick, got {mode!r}")
    d = D[r_star].astype(np.int8)
    assignment = TreatmentAssignment(d, np.zeros(n, dtype=bool), np.zeros(n, dtype=np.int64), method, seed)
    return assignment, BalanceStats(theta, wmax, r_star)
