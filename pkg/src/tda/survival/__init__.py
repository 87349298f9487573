"""Survival curves under informative censoring: simulation, hazard nets, KM, IPCW targeting."""
from .data import SurvivalDataset, read_survival_csv, simulate_survival, write_survival_csv
from .dgp import (
    DgpParams,
    calibrate_censoring,
    config_hash,
    gen_covariates,
    sample_censoring_time,
    sample_event_time,
    true_censoring_survival,
    true_hazard,
    true_marginal_survival,
)
from .hazard import (
    HazardNet,
    TimeGrid,
    fit_censoring_model,
    fit_hazard,
    marginal_survival,
    person_time,
    survival_from_hazard,
)
from .km import KmResult, km_estimate
from .targeted import G_MIN, SurvivalTargetingResult, ipcw_influence, target_survival_curve

__all__ = [
    "DgpParams", "G_MIN", "HazardNet", "KmResult", "SurvivalDataset",
    "SurvivalTargetingResult", "TimeGrid", "calibrate_censoring", "config_hash",
    "fit_censoring_model", "fit_hazard", "gen_covariates", "ipcw_influence",
    "km_estimate", "marginal_survival", "person_time", "read_survival_csv",
    "sample_censoring_time", "sample_event_time", "simulate_survival",
    "survival_from_hazard", "target_survival_curve", "true_censoring_survival",
    "true_hazard", "true_marginal_survival", "write_survival_csv",
]
