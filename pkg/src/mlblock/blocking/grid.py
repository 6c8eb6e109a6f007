"""Adaptive quantile grids with per-variable granularity set by importance."""
from __future__ import annotations

import math

import numpy as np

from ..cv import DEFAULT_FOLDS, kfold_split
from ..errors import BudgetTooSmall, TooFewUnits
from ..mlcore.lasso import ImportanceWeights
from .allocate import _off_ties, _sort, _threshold
from .partition import GridDefinition, Partition, _as_matrix


def _weight_array(weights, m: int) -> np.ndarray:
    if isinstance(weights, ImportanceWeights):
        w = weights.vector(m)
    else:
        w = np.asarray(weights, dtype=float).ravel()
    if len(w) != m:
        raise ValueError(f"{len(w)} weights for {m} variables")
    w = np.abs(w)
    return np.ones(m) if not w.any() else w


def bin_counts(weights, budget: int, m: int | None = None) -> tuple:
    """Integer bins per variable with product at most ``budget``, as close
    as possible (in squared log ratio) to counts proportional to weights.

    Zero-weight variables get a single bin. Ties go to the larger total
    cell count, then to earlier variables.
    """
    if budget < 1:
        raise BudgetTooSmall(f"budget {budget} < 1")
    if m is None:
        m = len(weights.weights) if isinstance(weights, ImportanceWeights) else len(weights)
    return _bin_counts(_weight_array(weights, m), int(budget))


def _bin_counts(w: np.ndarray, budget: int) -> tuple:
    active = np.flatnonzero(w > 0)
    m = len(active)
    wa = w[active]
    scale = (budget / np.prod(wa)) ** (1.0 / m)
    logt = np.log(wa * scale)
    best = (math.inf, 0, ())
    # enumerate tuples with product <= budget
    stack = [((), 1)]
    while stack:
        prefix, prod = stack.pop()
        k = len(prefix)
        if k == m:
            err = float(np.sum((np.log(prefix) - logt) ** 2))
            key = (round(err, 12), -prod, tuple(-v for v in prefix))
            if key < (round(best[0], 12), -best[1], tuple(-v for v in best[2])):
                best = (err, prod, prefix)
            continue
        for v in range(1, budget // prod + 1):
            stack.append((prefix + (v,), prod * v))
    out = np.ones(len(w), dtype=np.int64)
    out[active] = best[2]
    return tuple(int(v) for v in out)


def _edges(x: np.ndarray, q: int) -> np.ndarray:
    _, _, vals = _sort(x)
    n = len(vals)
    pos = _off_ties(vals, [round(j * n / q) for j in range(1, q)]) if q > 1 else []
    return np.array([_threshold(vals, p) for p in pos], dtype=float)


def _merge_small(cells, counts, order, c_B):
    """Union cells until every block holds ``c_B`` rows. ``order`` lists
    variables from least to most important."""
    block = {c: i for i, c in enumerate(cells)}
    size = dict(enumerate(counts))
    members = {i: [c] for i, c in enumerate(cells)}
    cell_set = set(cells)
    while len(size) > 1:
        small = [b for b in sorted(size) if size[b] < c_B]
        if not small:
            break
        b = min(small, key=lambda k: (size[k], k))
        target = None
        for k in order:
            cand = set()
            for c in members[b]:
                for d in (-1, 1):
                    nb = c[:k] + (c[k] + d,) + c[k + 1:]
                    if nb in cell_set and block[nb] != b:
                        cand.add(block[nb])
            if cand:
                target = min(cand, key=lambda t: (size[t], t))
                break
        if target is None:
            dist = {}
            for c in members[b]:
                for o in cells:
                    if block[o] != b:
                        d = sum(abs(x - y) for x, y in zip(c, o))
                        if d < dist.get(block[o], math.inf):
                            dist[block[o]] = d
            target = min(dist, key=lambda t: (dist[t], size[t], t))
        for c in members.pop(b):
            block[c] = target
            members[target].append(c)
        size[target] += size.pop(b)
    return block


def build_grid(X, bins, c_B: int, feature_names=None, weights=None) -> GridDefinition:
    """Quantile grid with ``bins[k]`` bins for variable ``k``; undersized
    cells are merged with a neighbor along the least important variable."""
    X = _as_matrix(X)
    n, m = X.shape
    if n < c_B:
        raise TooFewUnits(f"n={n} < c_B={c_B}")
    names = tuple(feature_names or (f"v{k}" for k in range(m)))
    w = np.ones(m) if weights is None else _weight_array(weights, m)
    edges = tuple(_edges(X[:, k], int(q)) for k, q in enumerate(bins))
    B = np.column_stack([np.searchsorted(e, X[:, k], side="right") for k, e in enumerate(edges)])
    cells, counts = np.unique(B, axis=0, return_counts=True)
    cells = [tuple(int(v) for v in c) for c in cells]
    order = sorted(range(m), key=lambda k: (w[k], k))
    block = _merge_small(cells, list(counts), order, c_B)
    dense = {}
    for c in cells:
        dense.setdefault(block[c], len(dense))
    return GridDefinition(names, edges, tuple(cells), tuple(dense[block[c]] for c in cells))


def _default_budgets(n: int, c_B: int) -> list[int]:
    top = max(1, n // c_B)
    out, b = [], 1
    while b <= top:
        out.append(b)
        b *= 2
    return out


def adaptive_grid(
    X,
    weights,
    budget=None,
    c_B: int = 4,
    y=None,
    plan=None,
    feature_names=None,
    seed: int = 0,
) -> Partition:
    """Grid whose per-variable granularity follows importance weights.

    ``budget`` caps the number of cells. A sequence of budgets is tuned by
    K-fold CV: the grid is rebuilt on each training fold and held-out ``y``
    is predicted by its cell's training mean (ties go to the smaller
    budget). ``None`` tunes over powers of two up to ``n // c_B``.
    """
    X = _as_matrix(X)
    n, m = X.shape
    if m < 1:
        raise ValueError("adaptive_grid needs at least one variable")
    w = _weight_array(weights, m)
    if budget is None:
        budgets = _default_budgets(n, c_B)
    elif np.ndim(budget) == 0:
        budgets = [int(budget)]
    else:
        budgets = sorted(int(b) for b in budget)
    if min(budgets) < 1:
        raise BudgetTooSmall(f"budget {min(budgets)} < 1")
    info = {"strategy": "grid"}
    if len(budgets) > 1:
        if y is None:
            raise ValueError("a budget grid needs a target y for CV")
        y = np.asarray(y, dtype=float)
        plan = plan or kfold_split(n, min(DEFAULT_FOLDS, n), seed)
        mspe = np.array([_cv_mspe(X, y, w, b, c_B, plan) for b in budgets])
        chosen = budgets[int(np.argmin(mspe))]
        info.update(budget_grid=budgets, cv_mspe=[float(v) for v in mspe])
    else:
        chosen = budgets[0]
    bins = _bin_counts(w, chosen)
    definition = build_grid(X, bins, c_B, feature_names, w)
    info.update(budget=chosen, bins=list(bins))
    return Partition(definition.assign(X), definition, c_B, features=X, info=info).check()


def _cv_mspe(X, y, w, budget, c_B, plan) -> float:
    bins = _bin_counts(w, budget)
    sq = np.empty(len(y))
    for _, tr, te in plan.folds():
        if len(tr) < c_B:
            sq[te] = (y[te] - y[tr].mean()) ** 2 if len(tr) else y[te] ** 2
            continue
        d = build_grid(X[tr], bins, c_B, weights=w)
        btr, bte = d.assign(X[tr]), d.assign(X[te])
        nb = int(btr.max()) + 1
        means = np.bincount(btr, weights=y[tr], minlength=nb) / np.maximum(np.bincount(btr, minlength=nb), 1)
        sq[te] = (y[te] - means[bte]) ** 2
    return float(sq.mean())


def equal_grid(X, c_B: int, feature_names=None) -> Partition:
    """Equal bins per column at the finest count whose smallest occupied
    cell still holds ``c_B`` rows."""
    X = _as_matrix(X)
    n, m = X.shape
    if n < c_B:
        raise TooFewUnits(f"n={n} < c_B={c_B}")
    best = 1
    for q in range(2, n // c_B + 1):
        edges = [_edges(X[:, k], q) for k in range(m)]
        B = np.column_stack([np.searchsorted(e, X[:, k], side="right") for k, e in enumerate(edges)])
        _, counts = np.unique(B, axis=0, return_counts=True)
        if counts.min() >= c_B:
            best = q
    definition = build_grid(X, (best,) * m, c_B, feature_names)
    return Partition(definition.assign(X), definition, c_B, features=X, info={"strategy": "grid", "bins": [best] * m}).check()
