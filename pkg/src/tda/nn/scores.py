"""Parameter partitions and per-sample loss gradients (score matrices)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InputShapeError, NumericalError
from .losses import make_loss
from .network import mean_gradient, per_sample_gradients


@dataclass(frozen=True)
class ParamPartition:
    """Split of a flat parameter vector into targeted and frozen indices."""

    targ_indices: np.ndarray
    fix_indices: np.ndarray

    @classmethod
    def from_targets(cls, targ_indices, n_params):
        targ = np.unique(np.asarray(targ_indices, dtype=np.int64))
        if targ.size == 0:
            raise ValueError("targeting index set must be nonempty")
        if targ[0] < 0 or targ[-1] >= n_params:
            raise IndexError(f"targeting indices out of range for {n_params} parameters")
        fix = np.setdiff1d(np.arange(n_params), targ, assume_unique=True)
        return cls(targ, fix)

    @classmethod
    def from_layers(cls, model, layer_ids):
        idx = np.concatenate([model.layer_slice(i) for i in layer_ids])
        return cls.from_targets(idx, model.n_params)

    @property
    def k(self):
        return self.targ_indices.size

    @property
    def n_params(self):
        return self.targ_indices.size + self.fix_indices.size

    def get(self, model):
        return model.flat_params()[self.targ_indices]

    def set(self, model, theta_targ):
        flat = model.flat_params()
        flat[self.targ_indices] = theta_targ
        model.set_flat_params(flat)


@dataclass
class ScoreMatrix:
    values: np.ndarray
    sample_ids: np.ndarray
    param_indices: np.ndarray

    @property
    def shape(self):
        return self.values.shape


def _group_sum(values, batch):
    if batch.groups is None:
        return values
    out = np.zeros((batch.n_groups,) + values.shape[1:])
    np.add.at(out, batch.groups, values)
    return out


def per_sample_scores(model, partition, loss, batch):
    """Gradient of each sample's loss w.r.t. the targeted parameters.

    Dropout is disabled. With ``batch.groups`` set, a sample's loss is the
    sum of its rows' losses.
    """
    loss = make_loss(loss)
    if batch.n_rows == 0:
        raise InputShapeError("score computation needs a nonempty batch")
    out, cache = model.forward_cache(batch.X, training=False)
    _, terms = model.backward(cache, loss.grad(out, batch))
    rows = per_sample_gradients(model.layers, terms, partition.targ_indices)
    values = _group_sum(rows, batch)
    bad = ~np.isfinite(values).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        sid = batch.sample_ids[i]
        raise NumericalError(f"non-finite score for sample {sid}", sample_id=sid)
    return ScoreMatrix(values, np.asarray(batch.sample_ids), partition.targ_indices.copy())


def sample_losses(model, loss, batch):
    """Per-sample loss values (rows summed within groups), no dropout."""
    loss = make_loss(loss)
    out, _ = model.forward_cache(batch.X, training=False)
    return _group_sum(loss.value(out, batch), batch)


def loss_and_gradient(model, loss, batch, training=False, rng=None, indices=None):
    """Mean loss and its gradient.

    The mean is over samples when the batch is grouped and over rows
    otherwise; ``indices`` restricts the returned gradient.
    """
    loss = make_loss(loss)
    out, cache = model.forward_cache(batch.X, training=training, rng=rng)
    per_row = loss.value(out, batch)
    _, terms = model.backward(cache, loss.grad(out, batch))
    norm = batch.n_samples
    grad = mean_gradient(model.layers, terms, norm)
    if indices is not None:
        grad = grad[indices]
    return per_row.sum() / norm, grad
