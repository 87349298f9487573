"""Adam with decoupled weight decay and an early-stopping training loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InputShapeError, TrainingError
from .losses import make_loss
from .scores import loss_and_gradient

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def zeros(cls, n, **hyper):
        return cls(np.zeros(n), np.zeros(n), 0, **hyper)


def adam_step(state, params, grad):
    """One Adam update with bias correction.

    Weight decay is decoupled: weights shrink by ``lr * weight_decay``
    directly instead of through the gradient.
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or params.shape != state.first_moment.shape:
        raise InputShapeError("Adam state, parameters and gradient must have equal length")
    state.step_count += 1
    t = state.step_count
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad**2
    m_hat = state.first_moment / (1.0 - state.beta1**t)
    v_hat = state.second_moment / (1.0 - state.beta2**t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if state.weight_decay:
        new = new - state.lr * state.weight_decay * params
    return new


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 128
    max_epochs: int = 300
    patience: int = 10
    min_delta: float = 0.0


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def train_loss(self):
        return [h[0] for h in self.history]

    @property
    def val_loss(self):
        return [h[1] for h in self.history]


def _eval_loss(model, loss, batch):
    value, _ = _objective(model, loss, batch, training=False, rng=None)
    return value


def _objective(model, loss, batch, training, rng):
    """Mean loss and gradient over model parameters plus any loss-owned extras."""
    if hasattr(loss, "loss_and_gradient"):
        return loss.loss_and_gradient(model, batch, training=training, rng=rng)
    return loss_and_gradient(model, loss, batch, training=training, rng=rng)


def train(model, loss, train_batch, val_batch, config=None, rng=None):
    """Mini-batch Adam on ``loss`` with early stopping on validation loss.

    The model is updated in place to the parameters with the best validation
    loss seen. ``history`` holds ``(train_loss, val_loss)`` per epoch, where
    the train loss is the mean of that epoch's mini-batch losses.

    A loss may own extra scalar parameters (``loss.extra``); these are
    optimized jointly and restored alongside the best weights.
    """
    cfg = config or TrainConfig()
    loss = make_loss(loss)
    rng = np.random.default_rng(rng)
    extra = getattr(loss, "extra", None)
    n_model = model.n_params

    def pack():
        flat = model.flat_params()
        return flat if extra is None else np.concatenate([flat, loss.extra])

    def unpack(vec):
        model.set_flat_params(vec[:n_model])
        if extra is not None:
            loss.extra = vec[n_model:].copy()

    params = pack()
    state = AdamState.zeros(params.size, lr=cfg.lr, weight_decay=cfg.weight_decay)
    if extra is not None:
        # extras are not decayed
        decay_mask = np.r_[np.ones(n_model), np.zeros(params.size - n_model)]
    best_val = np.inf
    best_params = params.copy()
    best_epoch = 0
    history = []
    n = train_batch.n_rows
    stopped = False
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            mb = train_batch.rows(order[start:start + cfg.batch_size])
            value, grad = _objective(model, loss, mb, training=True, rng=rng)
            batch_losses.append(value)
            if extra is None:
                params = adam_step(state, params, grad)
            else:
                wd = state.weight_decay
                state.weight_decay = 0.0
                stepped = adam_step(state, params, grad)
                state.weight_decay = wd
                params = stepped - state.lr * wd * params * decay_mask
            unpack(params)
        train_loss = float(np.mean(batch_losses))
        val_loss = float(_eval_loss(model, loss, val_batch))
        history.append((train_loss, val_loss))
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            unpack(best_params)
            raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch, history=history)
        if val_loss < best_val - cfg.min_delta:
            best_val = val_loss
            best_params = params.copy()
            best_epoch = epoch
        elif epoch - best_epoch > cfg.patience:
            stopped = True
            break
    unpack(best_params)
    log.debug("training stopped at epoch %d (best %d, val %.5g)", len(history) - 1, best_epoch, best_val)
    return TrainResult(model, history, best_epoch, stopped)
