"""Greedy regression trees (CART) with an MSE or EMSE split criterion.

Split candidates are midpoints between consecutive distinct sorted values;
a unit goes left when ``x[feature] < threshold``. Among splits of equal
quality the lowest feature index wins, then the lowest threshold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..errors import CannotSatisfy, EmptyInput, EmptyPartition

MSE = 0
EMSE = 1
_CRITERIA = {"mse": MSE, "emse": EMSE}


def _criterion_code(criterion) -> int:
    if isinstance(criterion, str):
        try:
            return _CRITERIA[criterion.lower()]
        except KeyError:
            raise ValueError(f"unknown criterion {criterion!r}") from None
    return int(criterion)


@numba.njit(cache=True)
def _var(s, ss, m):
    if m < 2:
        return 0.0
    v = (ss - s * s / m) / (m - 1)
    return v if v > 0.0 else 0.0


@numba.njit(cache=True)
def _best_split(X, y, rows, feats, min_leaf, criterion, tol):
    """Best (feature, threshold, gain) for the units ``rows``; feature -1 if none."""
    m = rows.shape[0]
    s_tot = 0.0
    ss_tot = 0.0
    for i in range(m):
        v = y[rows[i]]
        s_tot += v
        ss_tot += v * v
    if criterion == 0:
        parent = s_tot * s_tot / m
    else:
        parent = -s_tot * s_tot / m + 2.0 * _var(s_tot, ss_tot, m)
    best_f = -1
    best_thr = 0.0
    best_gain = tol
    vals = np.empty(m)
    ys = np.empty(m)
    for fi in range(feats.shape[0]):
        f = feats[fi]
        for i in range(m):
            vals[i] = X[rows[i], f]
        order = np.argsort(vals, kind="mergesort")
        for i in range(m):
            ys[i] = y[rows[order[i]]]
        s_l = 0.0
        ss_l = 0.0
        for p in range(1, m):
            v = ys[p - 1]
            s_l += v
            ss_l += v * v
            if p < min_leaf or m - p < min_leaf:
                continue
            a = vals[order[p - 1]]
            b = vals[order[p]]
            if not a < b:
                continue
            s_r = s_tot - s_l
            if criterion == 0:
                gain = s_l * s_l / p + s_r * s_r / (m - p) - parent
            else:
                ss_r = ss_tot - ss_l
                child = -(s_l * s_l / p + s_r * s_r / (m - p)) + 2.0 * (
                    _var(s_l, ss_l, p) + _var(s_r, ss_r, m - p)
                )
                gain = parent - child
            if gain > best_gain:
                best_gain = gain
                best_f = f
                thr = 0.5 * (a + b)
                if not (a < thr and thr <= b):
                    thr = b
                best_thr = thr
    return best_f, best_thr, best_gain


@numba.njit(cache=True)
def _grow(X, y, sample, max_depth, min_leaf, mtry, criterion, seed):
    n = sample.shape[0]
    K = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)
    depth = np.zeros(cap, np.int64)
    if mtry < K:
        np.random.seed(seed)
    pool = np.arange(K)
    work = sample.copy()
    tmp = np.empty(n, np.int64)
    ss_all = 0.0
    for i in range(n):
        ss_all += y[sample[i]] * y[sample[i]]
    tol = 1e-12 * (ss_all + 1.0)
    # stack of (node, start, end)
    st_node = np.empty(cap, np.int64)
    st_a = np.empty(cap, np.int64)
    st_b = np.empty(cap, np.int64)
    top = 0
    st_node[0] = 0
    st_a[0] = 0
    st_b[0] = n
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        a = st_a[top]
        b = st_b[top]
        m = b - a
        s = 0.0
        for i in range(a, b):
            s += y[work[i]]
        value[node] = s / m
        count[node] = m
        if (max_depth >= 0 and depth[node] >= max_depth) or m < 2 * min_leaf:
            continue
        if mtry < K:
            for j in range(mtry):
                r = j + np.random.randint(K - j)
                t = pool[j]
                pool[j] = pool[r]
                pool[r] = t
            feats = np.sort(pool[:mtry].copy())
        else:
            feats = pool
        f, thr, gain = _best_split(X, y, work[a:b], feats, min_leaf, criterion, tol)
        if f < 0:
            continue
        nl = 0
        nr = 0
        for i in range(a, b):
            if X[work[i], f] < thr:
                work[a + nl] = work[i]
                nl += 1
            else:
                tmp[nr] = work[i]
                nr += 1
        for i in range(nr):
            work[a + nl + i] = tmp[i]
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = f
        threshold[node] = thr
        left[node] = lc
        right[node] = rc
        depth[lc] = depth[node] + 1
        depth[rc] = depth[node] + 1
        # right pushed first so the left subtree is grown first
        st_node[top] = rc
        st_a[top] = a + nl
        st_b[top] = b
        top += 1
        st_node[top] = lc
        st_a[top] = a
        st_b[top] = a + nl
        top += 1
    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        count[:n_nodes],
    )


@numba.njit(cache=True)
def _apply(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], np.int64)
    for i in range(X.shape[0]):
        node = 0
        while left[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


def _preorder(left, right):
    order = []
    stack = [0]
    while stack:
        node = stack.pop()
        order.append(node)
        if left[node] >= 0:
            stack.append(right[node])
            stack.append(left[node])
    return order


@dataclass(frozen=True, eq=False)
class Tree:
    """Binary regression tree stored as parallel node arrays (node 0 is the root).

    Leaves carry the training mean and count; ``leaf_id`` numbers leaves
    left to right and is -1 on internal nodes.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    n_features: int
    max_depth: int = -1
    min_leaf: int = 1

    def __post_init__(self):
        order = _preorder(self.left, self.right)
        leaf_id = np.full(len(self.left), -1, dtype=np.int64)
        depth = np.zeros(len(self.left), dtype=np.int64)
        k = 0
        for node in order:
            if self.left[node] < 0:
                leaf_id[node] = k
                k += 1
            else:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        for name in ("feature", "threshold", "left", "right", "value", "count"):
            getattr(self, name).setflags(write=False)
        object.__setattr__(self, "leaf_id", leaf_id)
        object.__setattr__(self, "node_depth", depth)

    @property
    def n_leaves(self) -> int:
        return int((self.left < 0).sum())

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    @property
    def depth(self) -> int:
        return int(self.node_depth.max())

    def apply_nodes(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return _apply(X, self.feature, self.threshold, self.left, self.right)

    def apply(self, X) -> np.ndarray:
        """Leaf id (left-to-right order) of each row."""
        return self.leaf_id[self.apply_nodes(X)]

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply_nodes(X)]

    def split_features(self) -> set:
        return {int(f) for f, lc in zip(self.feature, self.left) if lc >= 0}

    def splits(self) -> list[tuple[int, float]]:
        """(feature, threshold) of every internal node in preorder."""
        return [
            (int(self.feature[i]), float(self.threshold[i]))
            for i in _preorder(self.left, self.right)
            if self.left[i] >= 0
        ]

    def collapse(self, node: int) -> "Tree":
        """Copy of the tree with ``node`` turned into a leaf."""
        left = self.left.copy()
        right = self.right.copy()
        left[node] = -1
        right[node] = -1
        return _compact(self, left, right)

    def to_dict(self, feature_names=None) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.left[i] >= 0:
                f = int(self.feature[i])
                nodes.append(
                    {
                        "id": i,
                        "feature": feature_names[f] if feature_names is not None else f,
                        "feature_index": f,
                        "threshold": float(self.threshold[i]),
                        "left": int(self.left[i]),
                        "right": int(self.right[i]),
                    }
                )
            else:
                nodes.append(
                    {
                        "id": i,
                        "leaf": int(self.leaf_id[i]),
                        "value": float(self.value[i]),
                        "count": int(self.count[i]),
                    }
                )
        return {"n_features": self.n_features, "nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        nodes = sorted(d["nodes"], key=lambda nd: nd["id"])
        m = len(nodes)
        feature = np.full(m, -1, np.int64)
        threshold = np.zeros(m)
        left = np.full(m, -1, np.int64)
        right = np.full(m, -1, np.int64)
        value = np.zeros(m)
        count = np.zeros(m, np.int64)
        for nd in nodes:
            i = nd["id"]
            if "leaf" in nd:
                value[i] = nd["value"]
                count[i] = nd["count"]
            else:
                feature[i] = nd["feature_index"]
                threshold[i] = nd["threshold"]
                left[i] = nd["left"]
                right[i] = nd["right"]
        return cls(feature, threshold, left, right, value, count, int(d["n_features"]))


def _compact(tree: Tree, left, right) -> Tree:
    order = _preorder(left, right)
    new = {old: i for i, old in enumerate(order)}
    idx = np.array(order)
    nl = np.array([new[left[o]] if left[o] >= 0 else -1 for o in order], dtype=np.int64)
    nr = np.array([new[right[o]] if right[o] >= 0 else -1 for o in order], dtype=np.int64)
    feature = np.where(nl >= 0, tree.feature[idx], -1)
    threshold = np.where(nl >= 0, tree.threshold[idx], 0.0)
    return Tree(
        feature=feature,
        threshold=threshold,
        left=nl,
        right=nr,
        value=tree.value[idx].copy(),
        count=tree.count[idx].copy(),
        n_features=tree.n_features,
        max_depth=tree.max_depth,
        min_leaf=tree.min_leaf,
    )


def _grow_tree(X, y, sample, max_depth, min_leaf, mtry, criterion, seed) -> Tree:
    arrays = _grow(X, y, sample, int(max_depth), int(min_leaf), int(mtry), int(criterion), int(seed))
    return _compact(
        Tree(*arrays, n_features=X.shape[1], max_depth=max_depth, min_leaf=min_leaf),
        arrays[2],
        arrays[3],
    )


def cart_fit(X, y, max_depth: int | None = None, min_leaf: int = 1, criterion="mse") -> Tree:
    """Grow a regression tree greedily.

    A node splits only if the best split strictly improves the criterion and
    both children keep at least ``min_leaf`` units. ``max_depth=None`` means
    no depth cap.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n == 0 or y.shape[0] != n:
        raise EmptyInput("cart_fit needs matching, non-empty X and y")
    if n < min_leaf:
        raise EmptyInput(f"n={n} is smaller than min_leaf={min_leaf}")
    depth = -1 if max_depth is None else int(max_depth)
    if max_depth is not None and max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    return _grow_tree(
        X, y, np.arange(n, dtype=np.int64), depth, max(1, min_leaf), X.shape[1],
        _criterion_code(criterion), 0,
    )


def tree_prune_to_min_leaf(tree: Tree, X_new, c_B: int) -> Tree:
    """Collapse splits until every leaf holds at least ``c_B`` rows of ``X_new``.

    Empty leaves count as violations too, so every remaining leaf is a usable
    block on ``X_new``. The deepest offending leaf is handled first and its
    parent collapsed into a leaf.
    """
    X_new = np.ascontiguousarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[:, None]
    if X_new.shape[0] < c_B:
        raise CannotSatisfy(f"only {X_new.shape[0]} units for minimum block size {c_B}")
    while tree.n_nodes > 1:
        counts = np.bincount(tree.apply_nodes(X_new), minlength=tree.n_nodes)
        leaves = np.flatnonzero(tree.left < 0)
        bad = [int(v) for v in leaves if counts[v] < c_B]
        if not bad:
            break
        worst = max(bad, key=lambda v: (tree.node_depth[v], -v))
        parent = int(np.flatnonzero((tree.left == worst) | (tree.right == worst))[0])
        tree = tree.collapse(parent)
    return tree


@dataclass(frozen=True)
class SplitScore:
    mse: float
    emse: float
    counts: tuple
    means: tuple
    variances: tuple


def emse_score(cells) -> SplitScore:
    """Score a partition from per-cell ``(N, mean, var_of_mean)`` triples.

    ``mse = -(1/N) sum N_l mu_l^2`` and ``emse = mse + (2/N) sum N_l V_l``.
    """
    cells = [tuple(map(float, c)) for c in cells]
    if not cells:
        raise EmptyPartition("no cells")
    N = sum(c[0] for c in cells)
    if N <= 0:
        raise EmptyPartition("cells hold no units")
    mse = -sum(c[0] * c[1] ** 2 for c in cells) / N
    emse = mse + 2.0 * sum(c[0] * c[2] for c in cells) / N
    return SplitScore(
        mse=mse,
        emse=emse,
        counts=tuple(c[0] for c in cells),
        means=tuple(c[1] for c in cells),
        variances=tuple(c[2] for c in cells),
    )


def cells_from_blocks(y, blocks) -> list[tuple[float, float, float]]:
    """(N, mean, within-cell sample variance / N) for each block."""
    y = np.asarray(y, dtype=float)
    out = []
    for b in np.unique(blocks):
        v = y[blocks == b]
        var = v.var(ddof=1) / len(v) if len(v) > 1 else 0.0
        out.append((len(v), v.mean(), var))
    return out
