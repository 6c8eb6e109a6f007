"""Treatment-effect OLS with block dummies, and balance t-statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateArms, DofExhausted, RankDeficient


@dataclass(frozen=True)
class EstimateResult:
    beta_hat: float
    se: float
    residual_ss: float
    dof: int
    b: int


def _blocks(n, partition):
    if partition is None:
        return np.zeros(n, dtype=np.int64)
    blocks = getattr(partition, "block_of", partition)
    return np.unique(np.asarray(blocks), return_inverse=True)[1].astype(np.int64)


def _demean(v, blocks, b):
    counts = np.bincount(blocks, minlength=b)
    return v - (np.bincount(blocks, weights=v, minlength=b) / counts)[blocks]


def ols_block_estimate(y, d, partition=None) -> EstimateResult:
    """Regress ``y`` on an intercept, ``d`` and ``b - 1`` block dummies.

    The coefficient comes from within-block demeaning (the dummies absorb
    block means), which matches the full design exactly. Without a partition
    all units form one block, so ``dof = n - 2``. ``partition`` may also be a
    plain vector of block (or pair) ids.
    """
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    n = len(y)
    if len(d) != n:
        raise ValueError("y and d differ in length")
    if not (d == 1).any() or not (d == 0).any():
        raise DegenerateArms("treatment vector needs both arms")
    blocks = _blocks(n, partition)
    b = int(blocks.max()) + 1
    dof = n - b - 1
    if dof <= 0:
        raise DofExhausted(f"n={n} leaves no residual degrees of freedom with b={b}")
    dt = _demean(d, blocks, b)
    yt = _demean(y, blocks, b)
    sdd = float(dt @ dt)
    if sdd <= 1e-12 * n:
        raise RankDeficient("treatment is constant within every block")
    beta = float(dt @ yt) / sdd
    u = yt - beta * dt
    rss = float(u @ u)
    return EstimateResult(beta, math.sqrt(rss / dof / sdd), rss, dof, b)


def se_ratio(n: int, b: int) -> float:
    """Standard-error inflation from one extra useless block dummy."""
    if n - b - 2 <= 0:
        raise DofExhausted(f"n - b - 2 = {n - b - 2} <= 0")
    return math.sqrt((n - b - 1) / (n - b - 2))


def two_sample_t(x, d) -> float:
    """Welch t of treated minus control means.

    Both arm variances zero: 0 when the means agree, otherwise signed inf.
    """
    return float(t_matrix(np.asarray(x, dtype=float)[:, None], np.asarray(d)[None, :])[0, 0])


def t_matrix(X, D) -> np.ndarray:
    """Welch t for every (draw, column) pair: ``D`` is R x n in {0,1},
    ``X`` is n x K. Returns R x K."""
    X = np.asarray(X, dtype=float)
    X = X - X.mean(axis=0)  # centering tames cancellation in the one-pass variances
    D = np.asarray(D, dtype=float)
    n1 = D.sum(axis=1)[:, None]
    n0 = D.shape[1] - n1
    if (n1 == 0).any() or (n0 == 0).any():
        raise DegenerateArms("both arms must be non-empty")
    C = 1.0 - D
    m1, m0 = (D @ X) / n1, (C @ X) / n0
    q1, q0 = (D @ X**2) / n1, (C @ X**2) / n0
    # ddof=1 variances; a single-unit arm contributes 0
    v1 = np.maximum(q1 - m1**2, 0) * n1 / np.maximum(n1 - 1, 1)
    v0 = np.maximum(q0 - m0**2, 0) * n0 / np.maximum(n0 - 1, 1)
    diff = m1 - m0
    scale = np.sqrt(v1 / n1 + v0 / n0)
    tiny = 1e-12 * (np.abs(m1) + np.abs(m0) + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = diff / scale
    degenerate = scale <= tiny
    t = np.where(degenerate, np.where(np.abs(diff) <= tiny, 0.0, np.copysign(np.inf, diff)), t)
    return t
