"""Design procedures: fit once on pre-period data, then draw assignments.

A design's ``fit(panel, seed)`` returns a fitted design whose
``draw(seed)`` yields a TreatmentAssignment. ``group_of`` on the assignment
holds the block or pair ids that become dummies at estimation time.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .assignment import Criterion, TreatmentAssignment, assign_within_blocks, pairwise_match, rerandomize
from .blocking import (
    GridDefinition,
    Partition,
    TrainingFrame,
    fallback_blocking,
    fps_blocking,
    fps_scores,
    from_definition,
    single_block,
    vs_blocking,
)
from .blocking.vs import vs_features
from .dataset import PanelDataset
from .mlcore.forest import DEFAULT_N_TREES


@dataclass(frozen=True, eq=False)
class FittedBlocks:
    partition: Partition

    def draw(self, seed: int) -> TreatmentAssignment:
        return assign_within_blocks(self.partition, seed)


@dataclass(frozen=True, eq=False)
class FittedPairs:
    X: np.ndarray
    strategy: str
    weights: np.ndarray | None
    odd: str

    def draw(self, seed: int) -> TreatmentAssignment:
        return pairwise_match(self.X, self.strategy, self.weights, seed, self.odd)[1]


@dataclass(frozen=True, eq=False)
class FittedRerandomization:
    criterion: Criterion
    mode: str
    R: int
    alpha: float
    max_draws: int

    def draw(self, seed: int) -> TreatmentAssignment:
        return rerandomize(self.criterion, self.mode, self.R, self.alpha, self.max_draws, seed)[0]


@dataclass(frozen=True)
class CompleteRandomization:
    name: str = "complete"

    def fit(self, panel: PanelDataset, seed: int = 0) -> FittedBlocks:
        return FittedBlocks(single_block(panel.n, 1))


@dataclass(frozen=True)
class BlockedDesign:
    """Blocks from VS, FPS or a fallback builder."""

    name: str
    strategy: str = "vs"  # vs | fps | fallback
    c_B: int = 4
    n_trees: int = DEFAULT_N_TREES
    options: dict = field(default_factory=dict)

    def partition(self, panel: PanelDataset, seed: int = 0) -> Partition:
        o = self.options
        if self.strategy == "vs":
            return vs_blocking(
                panel, self.c_B, o.get("use_feature_selection", "auto"), o.get("include_yhat", True),
                seed=seed, n_trees=self.n_trees, criterion=o.get("criterion", "mse"),
                lasso_rule=o.get("lasso_rule", "min"),
            )[0]
        if self.strategy == "fps":
            return fps_blocking(panel, o.get("allocator", "sequential"), self.c_B, seed, self.n_trees)
        if self.strategy == "fallback" and o.get("mode") is None:
            mode = "single_pre" if panel.pre_periods else "zero_pre"
            return fallback_blocking(panel, mode, None, o.get("weight_rule", "sum"), self.c_B, seed)
        if self.strategy == "fallback":
            return fallback_blocking(panel, o.get("mode", "single_pre"), o.get("aux_partition"),
                                     o.get("weight_rule", "sum"), self.c_B, seed)
        raise ValueError(f"unknown blocking strategy {self.strategy!r}")

    def fit(self, panel: PanelDataset, seed: int = 0) -> FittedBlocks:
        return FittedBlocks(self.partition(panel, seed))


@dataclass(frozen=True)
class ManualGridDesign:
    """A user-supplied grid over named covariates or outcome periods:
    ``edges[k]`` are the interior cut points of ``feature_names[k]``."""

    name: str
    feature_names: tuple
    edges: tuple
    c_B: int = 1

    def partition(self, panel: PanelDataset, seed: int = 0) -> Partition:
        F = panel.feature_matrix(self.feature_names)
        edges = tuple(np.asarray(e, dtype=float) for e in self.edges)
        bins = np.column_stack([np.searchsorted(e, F[:, k], side="right") for k, e in enumerate(edges)])
        cells = sorted({tuple(int(v) for v in row) for row in bins})
        definition = GridDefinition(tuple(self.feature_names), edges, tuple(cells), tuple(range(len(cells))))
        part = from_definition(definition, F, self.c_B)
        # a fixed grid is not learned, so held-out units are placed by the same features
        frame = TrainingFrame(part.block_of, lambda p: definition.assign(p.feature_matrix(self.feature_names)))
        return replace(part, training_frame=frame)

    def fit(self, panel: PanelDataset, seed: int = 0) -> FittedBlocks:
        return FittedBlocks(self.partition(panel, seed))


@dataclass(frozen=True)
class PairedDesign:
    name: str
    strategy: str = "vs"
    n_trees: int = DEFAULT_N_TREES
    odd: str = "random_holdout"

    def fit(self, panel: PanelDataset, seed: int = 0) -> FittedPairs:
        if self.strategy == "vs":
            vf = vs_features(panel, seed=seed, n_trees=self.n_trees)
            return FittedPairs(vf.updated, "vs", vf.selected.weight_vector(), self.odd)
        return FittedPairs(fps_scores(panel, seed, self.n_trees).scores, "fps", None, self.odd)


@dataclass(frozen=True)
class RerandomizedDesign:
    name: str
    strategy: str = "vs"
    mode: str = "minmax"
    R: int = 1000
    alpha: float = 0.05
    max_draws: int = 1000
    n_trees: int = DEFAULT_N_TREES

    def fit(self, panel: PanelDataset, seed: int = 0) -> FittedRerandomization:
        if self.strategy == "vs":
            vf = vs_features(panel, seed=seed, n_trees=self.n_trees)
            crit = Criterion.vs(vf.updated, vf.selected.weight_vector())
        else:
            crit = Criterion.fps(fps_scores(panel, seed, self.n_trees).scores)
        return FittedRerandomization(crit, self.mode, self.R, self.alpha, self.max_draws)


def make_design(name: str, kind: str, c_B: int = 4, n_trees: int = DEFAULT_N_TREES, **options):
    """Build a design from a flat description (used by configs)."""
    if kind == "complete":
        return CompleteRandomization(name)
    if kind in ("vs", "fps", "fallback"):
        return BlockedDesign(name, kind, c_B, n_trees, options)
    if kind == "matching":
        return PairedDesign(name, options.get("strategy", "vs"), n_trees, options.get("odd", "random_holdout"))
    if kind == "rerandomization":
        return RerandomizedDesign(
            name, options.get("strategy", "vs"), options.get("mode", "minmax"), options.get("R", 1000),
            options.get("alpha", 0.05), options.get("max_draws", 1000), n_trees,
        )
    if kind == "grid":
        return ManualGridDesign(name, tuple(options["features"]), tuple(options["edges"]), c_B)
    raise ValueError(f"unknown design kind {kind!r}")
