"""Minimal dense network engine: forward/backward, scores, Adam, solvers."""
from .checkpoint import load_checkpoint, save_checkpoint
from .losses import BCELoss, Batch, MSELoss, PoissonLoss, make_loss, poisson_loss
from .network import DenseNet, Layer, activate
from .optim import AdamState, TrainConfig, TrainResult, adam_step, train
from .scores import (
    ParamPartition,
    ScoreMatrix,
    loss_and_gradient,
    per_sample_scores,
    sample_losses,
)
from .solvers import lasso_objective, lasso_solve, ridge_solve

__all__ = [
    "AdamState", "Batch", "BCELoss", "DenseNet", "Layer", "MSELoss",
    "ParamPartition", "PoissonLoss", "ScoreMatrix", "TrainConfig", "TrainResult",
    "activate", "adam_step", "lasso_objective", "lasso_solve", "load_checkpoint",
    "loss_and_gradient", "make_loss", "per_sample_scores", "poisson_loss",
    "ridge_solve", "sample_losses", "save_checkpoint", "train",
]
