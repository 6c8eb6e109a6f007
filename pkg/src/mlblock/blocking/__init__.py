from .allocate import optimize_1d_partition, scaled_sequential_allocate, sequential_allocate
from .fallback import fallback_blocking, pre_weight
from .fps import PrognosticScores, choose_block_count, fps_blocking, fps_scores
from .grid import adaptive_grid, bin_counts, build_grid, equal_grid
from .partition import (
    ComposedDefinition,
    GridDefinition,
    IntervalDefinition,
    Partition,
    TrainingFrame,
    TreeDefinition,
    definition_from_dict,
    from_definition,
    single_block,
)
from .vs import SelectedFeatures, vs_blocking

__all__ = [
    "ComposedDefinition",
    "GridDefinition",
    "IntervalDefinition",
    "Partition",
    "PrognosticScores",
    "SelectedFeatures",
    "TrainingFrame",
    "TreeDefinition",
    "adaptive_grid",
    "bin_counts",
    "build_grid",
    "choose_block_count",
    "definition_from_dict",
    "equal_grid",
    "fallback_blocking",
    "fps_blocking",
    "fps_scores",
    "from_definition",
    "optimize_1d_partition",
    "pre_weight",
    "scaled_sequential_allocate",
    "sequential_allocate",
    "single_block",
    "vs_blocking",
]
