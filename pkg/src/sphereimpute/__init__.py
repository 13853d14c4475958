"""Fast rank-k matrix completion by descent on the unit sphere."""
from .blocks import complete_blocked, plan_blocks
from .completion import (CompletionReport, RankSelection, complete_with_features, fill_rows,
                         mape, mape_details, run_pipeline, select_rank)
from .data import (Entries, FeatureMatrix, ObservedMatrix, SyntheticInstance,
                   generate_synthetic, mask_validation_split)
from .descent import DescentConfig, DescentResult, descend, warmstart
from .errors import InputError, NumericalError, ParameterError
from .objective import EngineOptions, cost, evaluate, gradient, row_coefficients
from .sampling import AdaptiveSampler, adapt, initial_sizes

__all__ = [
    "AdaptiveSampler", "CompletionReport", "DescentConfig", "DescentResult", "EngineOptions",
    "Entries", "FeatureMatrix", "InputError", "NumericalError", "ObservedMatrix",
    "ParameterError", "RankSelection", "SyntheticInstance", "adapt", "complete_blocked",
    "complete_with_features", "cost", "descend", "evaluate", "fill_rows", "generate_synthetic",
    "gradient", "initial_sizes", "mape", "mape_details", "mask_validation_split", "plan_blocks",
    "row_coefficients", "run_pipeline", "select_rank", "warmstart",
]
