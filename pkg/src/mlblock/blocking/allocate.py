"""One-dimensional partitions of a score: sequential, scaled and optimized cuts.

Cuts are positions ``p`` in score-sorted order (a block boundary sits
between sorted units ``p - 1`` and ``p``). A cut never splits a run of
identical scores and every block keeps at least ``c_B`` units; a block that
ends up too small is merged upward (into the next-higher block), except the
top block, which merges into the one below.
"""
from __future__ import annotations

import numpy as np

from ..errors import BadBlockCount, TooFewUnits
from .partition import IntervalDefinition, Partition


def _sort(scores):
    s = np.asarray(scores, dtype=float).ravel()
    order = np.lexsort((np.arange(len(s)), s))
    return s, order, s[order]


def _off_ties(vals, cuts) -> list[int]:
    n = len(vals)
    out = []
    for p in cuts:
        while p < n and vals[p - 1] == vals[p]:
            p += 1
        if 0 < p < n and (not out or p > out[-1]):
            out.append(p)
    return out


def repair_cuts(vals, cuts, c_B: int) -> list[int]:
    """Move cuts off tie runs, then merge blocks smaller than ``c_B``."""
    n = len(vals)
    cuts = _off_ties(vals, sorted(cuts))
    while cuts:
        bounds = [0, *cuts, n]
        sizes = np.diff(bounds)
        small = np.flatnonzero(sizes < c_B)
        if not len(small):
            break
        j = int(small[0])
        if j == len(sizes) - 1:
            cuts.pop(j - 1)
        else:
            cuts.pop(j)
    return cuts


def _threshold(vals, p) -> float:
    a, b = vals[p - 1], vals[p]
    t = 0.5 * (a + b)
    return t if a < t <= b else b


def partition_from_cuts(scores, cuts, c_B: int, score_model: str = "", info=None) -> Partition:
    s, order, vals = _sort(scores)
    thresholds = np.array([_threshold(vals, p) for p in cuts], dtype=float)
    definition = IntervalDefinition(thresholds, ("score",), score_model)
    return Partition(
        definition.assign(s), definition, c_B, features=s[:, None], info=dict(info or {})
    ).check()


def sequential_cuts(vals, c_B: int) -> list[int]:
    n = len(vals)
    cuts = []
    pos = 0
    while True:
        end = pos + c_B
        if end >= n:
            break
        while end < n and vals[end - 1] == vals[end]:
            end += 1
        if end >= n:
            break
        cuts.append(end)
        pos = end
    return repair_cuts(vals, cuts, c_B)


def sequential_allocate(scores, c_B: int, score_model: str = "") -> Partition:
    """Sort by score and cut consecutive groups of ``c_B``.

    A group grows to absorb a tie run crossing its boundary; a leftover
    group smaller than ``c_B`` joins the highest-score block.
    """
    s, _, vals = _sort(scores)
    if len(s) < c_B:
        raise TooFewUnits(f"n={len(s)} < c_B={c_B}")
    return partition_from_cuts(s, sequential_cuts(vals, c_B), c_B, score_model)


def scaled_cuts(vals, b: int, c_B: int) -> list[int]:
    n = len(vals)
    if not 1 <= b <= n // c_B:
        raise BadBlockCount(f"b={b} outside [1, {n // c_B}] for n={n}, c_B={c_B}")
    q, r = divmod(n, b)
    sizes = [q + 1] * r + [q] * (b - r)
    return repair_cuts(vals, list(np.cumsum(sizes)[:-1]), c_B)


def scaled_sequential_allocate(scores, b: int, c_B: int, score_model: str = "") -> Partition:
    """``b`` contiguous score blocks of sizes ``ceil(n/b)`` (first ``n % b``
    blocks) or ``floor(n/b)``."""
    s, _, vals = _sort(scores)
    return partition_from_cuts(s, scaled_cuts(vals, b, c_B), c_B, score_model)


def _sse_table(y_sorted):
    c1 = np.concatenate([[0.0], np.cumsum(y_sorted)])
    c2 = np.concatenate([[0.0], np.cumsum(y_sorted**2)])

    def sse(a, b):
        m = b - a
        s = c1[b] - c1[a]
        return (c2[b] - c2[a]) - s * s / m

    return sse


def optimize_cuts(vals, y_sorted, b: int, c_B: int):
    """Coordinate descent over cut positions from the scaled (quantile) start.

    Returns ``(cuts, n_sweeps, n_moves)``; a cut moves only if the summed
    within-block SSE strictly drops.
    """
    n = len(vals)
    cuts = scaled_cuts(vals, b, c_B)
    sse = _sse_table(np.asarray(y_sorted, dtype=float))
    tol = 1e-12 * (float(np.sum(np.square(y_sorted))) + 1.0)
    sweeps = moves = 0
    changed = True
    while changed and cuts:
        changed = False
        sweeps += 1
        for j in range(len(cuts)):
            lo = (cuts[j - 1] if j else 0) + c_B
            hi = (cuts[j + 1] if j + 1 < len(cuts) else n) - c_B
            left_end = cuts[j - 1] if j else 0
            right_end = cuts[j + 1] if j + 1 < len(cuts) else n
            current = sse(left_end, cuts[j]) + sse(cuts[j], right_end)
            best_p, best = cuts[j], current
            for p in range(lo, hi + 1):
                if vals[p - 1] == vals[p]:
                    continue
                v = sse(left_end, p) + sse(p, right_end)
                if v < best - tol:
                    best_p, best = p, v
            if best_p != cuts[j]:
                cuts[j] = best_p
                changed = True
                moves += 1
    return cuts, sweeps, moves


def optimize_1d_partition(scores, y_target, b: int, c_B: int, score_model: str = "") -> Partition:
    """Cut sorted scores into (at most) ``b`` blocks minimizing within-block
    SSE of ``y_target``."""
    s, order, vals = _sort(scores)
    y_sorted = np.asarray(y_target, dtype=float)[order]
    cuts, sweeps, moves = optimize_cuts(vals, y_sorted, b, c_B)
    return partition_from_cuts(s, cuts, c_B, score_model, info={"sweeps": sweeps, "moves": moves})
