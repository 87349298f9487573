"""Average treatment effect: DragonNet, comparison estimators, influence function."""
from .data import AteDataset, read_ate_csv, write_ate_csv
from .dragonnet import (
    LAST_LAYER,
    OUTCOME_HEADS,
    DragonNet,
    DragonNetLoss,
    FactualMSELoss,
    TargetedRegLoss,
    fit_dragonnet,
    treg_predictions,
    treg_train,
)
from .estimators import (
    METHODS,
    AteEstimate,
    NuisancePredictions,
    aipw_ate,
    clever_covariate,
    clip_propensity,
    eif_ate,
    plugin_ate,
    post_tmle,
    wald_ci,
)

__all__ = [
    "AteDataset", "AteEstimate", "DragonNet", "DragonNetLoss", "FactualMSELoss",
    "LAST_LAYER", "METHODS", "NuisancePredictions", "OUTCOME_HEADS",
    "TargetedRegLoss", "aipw_ate", "clever_covariate", "clip_propensity", "eif_ate",
    "fit_dragonnet", "plugin_ate", "post_tmle", "read_ate_csv", "treg_predictions",
    "treg_train", "wald_ci", "write_ate_csv",
]
