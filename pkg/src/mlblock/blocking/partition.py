"""Partition type and the definitions that generate block ids from features."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import InvariantError
from ..mlcore.cart import Tree


def _as_matrix(F, width=None) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if width is not None and F.shape[1] != width:
        raise ValueError(f"feature matrix has {F.shape[1]} columns, expected {width}")
    return F


@dataclass(frozen=True, eq=False)
class TreeDefinition:
    """Blocks are the leaves of a tree; block id = left-to-right leaf id."""

    tree: Tree
    feature_names: tuple

    kind = "tree"

    def assign(self, F) -> np.ndarray:
        F = _as_matrix(F, len(self.feature_names))
        if F.shape[1] == 0:
            return np.zeros(F.shape[0], dtype=np.int64)
        return self.tree.apply(F)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "feature_names": list(self.feature_names), "tree": self.tree.to_dict(list(self.feature_names))}


@dataclass(frozen=True, eq=False)
class IntervalDefinition:
    """Blocks are score intervals; a score ``s`` falls in block
    ``#{cuts <= s}``."""

    cuts: np.ndarray
    feature_names: tuple = ("score",)
    score_model: str = ""

    kind = "intervals"

    def assign(self, F) -> np.ndarray:
        s = _as_matrix(F, 1)[:, 0]
        return np.searchsorted(self.cuts, s, side="right").astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "cuts": [float(c) for c in self.cuts],
            "score_model": self.score_model,
        }


@dataclass(frozen=True, eq=False)
class GridDefinition:
    """Cartesian grid of per-variable quantile bins with merged cells.

    ``edges[k]`` are the interior bin edges of variable ``k``
    (``bin = #{edges <= x}``). Occupied cells map to blocks through
    ``cells`` / ``cell_block``; a row landing in an unlisted cell goes to the
    listed cell nearest in bin-index (L1) distance.
    """

    feature_names: tuple
    edges: tuple
    cells: tuple
    cell_block: tuple

    kind = "grid"

    def bins(self, F) -> np.ndarray:
        F = _as_matrix(F, len(self.feature_names))
        if not self.edges:
            return np.zeros((F.shape[0], 0), dtype=np.int64)
        return np.column_stack(
            [np.searchsorted(e, F[:, k], side="right") for k, e in enumerate(self.edges)]
        ).astype(np.int64)

    def assign(self, F) -> np.ndarray:
        B = self.bins(F)
        lookup = dict(zip(self.cells, self.cell_block))
        cell_arr = np.array(self.cells, dtype=np.int64).reshape(len(self.cells), B.shape[1])
        out = np.empty(B.shape[0], dtype=np.int64)
        for i, row in enumerate(B):
            key = tuple(int(v) for v in row)
            blk = lookup.get(key)
            if blk is None:
                dist = np.abs(cell_arr - row).sum(axis=1)
                blk = self.cell_block[int(np.argmin(dist))]
            out[i] = blk
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "edges": [[float(v) for v in e] for e in self.edges],
            "cells": [{"cell": list(c), "block": int(b)} for c, b in zip(self.cells, self.cell_block)],
        }


@dataclass(frozen=True, eq=False)
class ComposedDefinition:
    """A seed partition refined cell by cell.

    Columns ``seed_cols`` of the feature matrix feed the seed definition,
    ``child_cols`` feed each seed cell's sub-definition; ``block_map`` sends
    ``(seed_block, sub_block)`` to the final block id.
    """

    seed: object
    children: tuple
    seed_cols: tuple
    child_cols: tuple
    block_map: dict
    feature_names: tuple

    kind = "composed"

    def assign(self, F) -> np.ndarray:
        F = _as_matrix(F, len(self.feature_names))
        s = self.seed.assign(F[:, list(self.seed_cols)])
        out = np.empty(F.shape[0], dtype=np.int64)
        sub_F = F[:, list(self.child_cols)]
        for c in np.unique(s):
            rows = np.flatnonzero(s == c)
            child = self.children[int(c)]
            sub = child.assign(sub_F[rows])
            fallback = min(v for (sc, _), v in self.block_map.items() if sc == c)
            out[rows] = [self.block_map.get((int(c), int(v)), fallback) for v in sub]
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "seed": self.seed.to_dict(),
            "seed_cols": list(self.seed_cols),
            "child_cols": list(self.child_cols),
            "children": [c.to_dict() for c in self.children],
            "block_map": [{"seed_block": int(a), "sub_block": int(b), "block": int(v)} for (a, b), v in sorted(self.block_map.items())],
        }


def definition_from_dict(d: dict):
    kind = d["kind"]
    names = tuple(d.get("feature_names", ()))
    if kind == "tree":
        return TreeDefinition(Tree.from_dict(d["tree"]), names)
    if kind == "intervals":
        return IntervalDefinition(np.array(d["cuts"], dtype=float), names, d.get("score_model", ""))
    if kind == "grid":
        return GridDefinition(
            names,
            tuple(np.array(e, dtype=float) for e in d["edges"]),
            tuple(tuple(c["cell"]) for c in d["cells"]),
            tuple(int(c["block"]) for c in d["cells"]),
        )
    if kind == "composed":
        return ComposedDefinition(
            seed=definition_from_dict(d["seed"]),
            children=tuple(definition_from_dict(c) for c in d["children"]),
            seed_cols=tuple(d["seed_cols"]),
            child_cols=tuple(d["child_cols"]),
            block_map={(m["seed_block"], m["sub_block"]): m["block"] for m in d["block_map"]},
            feature_names=names,
        )
    raise ValueError(f"unknown definition kind {kind!r}")


@dataclass(frozen=True, eq=False)
class TrainingFrame:
    """How a partition predicts the design target out of sample.

    ``block_of`` are the fitting units' blocks when features use the earlier
    (training) lags; ``assign`` places units of another panel with the same
    periods into those blocks. Used to score a strategy on held-out units.
    """

    block_of: np.ndarray
    assign: Callable


@dataclass(frozen=True, eq=False)
class Partition:
    block_of: np.ndarray
    definition: object
    c_B: int
    features: np.ndarray | None = None
    training_frame: TrainingFrame | None = field(default=None, repr=False)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        b = np.asarray(self.block_of, dtype=np.int64)
        b.setflags(write=False)
        object.__setattr__(self, "block_of", b)

    @property
    def n(self) -> int:
        return len(self.block_of)

    @property
    def b(self) -> int:
        return int(self.block_of.max()) + 1 if self.n else 0

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.block_of, minlength=self.b)

    @property
    def feature_names(self) -> tuple:
        return tuple(self.definition.feature_names)

    def replay(self, F=None) -> np.ndarray:
        return self.definition.assign(self.features if F is None else F)

    def check(self) -> "Partition":
        """Raise InvariantError unless block ids are dense, every block has
        at least c_B units and the definition reproduces ``block_of``."""
        sizes = self.sizes
        if self.n and (self.block_of.min() < 0 or (sizes == 0).any()):
            raise InvariantError(f"block ids not dense in [0, {self.b})")
        if self.n and sizes.min() < self.c_B:
            raise InvariantError(f"block of size {sizes.min()} below c_B={self.c_B}")
        if self.features is not None and not np.array_equal(self.replay(), self.block_of):
            raise InvariantError("definition replay does not reproduce block_of")
        return self

    def to_dict(self, unit_ids=None) -> dict:
        out = {
            "c_B": int(self.c_B),
            "b": self.b,
            "sizes": [int(s) for s in self.sizes],
            "definition": self.definition.to_dict(),
        }
        if self.info:
            out["info"] = self.info
        ids = unit_ids if unit_ids is not None else range(self.n)
        out["assignments"] = [{"unit": u, "block": int(b)} for u, b in zip(ids, self.block_of)]
        return out


def single_block(n: int, c_B: int, feature_names=("score",)) -> Partition:
    definition = IntervalDefinition(np.array([]), tuple(feature_names)[:1] or ("score",))
    return Partition(np.zeros(n, dtype=np.int64), definition, c_B, features=np.zeros((n, 1)))


def from_definition(definition, F, c_B: int, **kw) -> Partition:
    F = _as_matrix(F)
    return Partition(definition.assign(F), definition, c_B, features=F, **kw).check()
