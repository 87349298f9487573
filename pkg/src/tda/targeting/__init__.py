"""Targeting engine: projection, update loop, multi-target blending, submodel choice."""
from .direct import DirectResult, tda_direct
from .engine import (
    MAX_ITERS,
    NO_LOSS_IMPROVEMENT,
    TOLERANCE_MET,
    NoLossImprovement,
    TargetingConfig,
    TargetingReport,
    combine_directions,
    project_influence,
    stopping_threshold,
    targeting_step,
    tda_run,
    tda_run_multi,
)
from .selection import block_gradients, estimand_gradient, nested_submodels, plateau_select

__all__ = [
    "DirectResult", "MAX_ITERS", "NO_LOSS_IMPROVEMENT", "NoLossImprovement",
    "TOLERANCE_MET", "TargetingConfig", "TargetingReport", "block_gradients",
    "combine_directions", "estimand_gradient", "nested_submodels", "plateau_select",
    "project_influence", "stopping_threshold", "targeting_step", "tda_direct",
    "tda_run", "tda_run_multi",
]
