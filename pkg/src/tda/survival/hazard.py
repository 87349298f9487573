"""Neural conditional hazard with a Poisson person-time loss.

A subject contributes one row per evaluation-grid cell it is at risk in.
The row's input is the covariate vector plus the midpoint of the at-risk
part of the cell, ``tau`` is the time at risk in the cell and the event
indicator is 1 only in the cell holding an observed event. Survival curves
integrate ``exp(log-hazard)`` with the trapezoid rule on a refined grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InputShapeError
from ..nn import Batch, DenseNet, Layer, PoissonLoss, TrainConfig, train
from ..nn.checkpoint import register


@dataclass(frozen=True)
class TimeGrid:
    """Evaluation times plus a uniform integration grid on ``[0, points[-1]]``.

    ``n_substeps`` must be a multiple of the number of points when the
    points are equally spaced so every point falls on the refined grid.
    """

    points: np.ndarray = field(default_factory=lambda: 16.0 * np.arange(1, 51) / 50)
    n_substeps: int = 200

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 1 or pts.size == 0:
            raise InputShapeError("time grid needs at least one point")
        if pts[0] <= 0 or np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be positive and strictly increasing")
        if self.n_substeps < 1:
            raise ValueError("n_substeps must be positive")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, horizon=16.0, k=50, n_substeps=200):
        return cls(horizon * np.arange(1, k + 1) / k, n_substeps)

    @property
    def k(self):
        return self.points.size

    @property
    def cuts(self):
        """Cell boundaries ``[0, t_1, ..., t_K]``."""
        return np.r_[0.0, self.points]

    @property
    def refined(self):
        fine = np.linspace(0.0, self.points[-1], self.n_substeps + 1)
        return np.union1d(fine, self.points)

    @property
    def point_index(self):
        return np.searchsorted(self.refined, self.points)


@register
class HazardNet(DenseNet):
    """MLP on ``[x, t / time_scale]`` returning ``log lambda(t | x)``."""

    def __init__(self, layers, dropout=0.0, time_scale=1.0):
        super().__init__(layers, dropout)
        self.time_scale = float(time_scale)

    @classmethod
    def build(cls, n_features, hidden=(64, 32, 16), dropout=0.2, time_scale=16.0, rng=None):
        sizes = [n_features + 1, *hidden, 1]
        base = DenseNet.from_sizes(sizes, ["relu"] * len(hidden) + ["identity"], rng=rng)
        return cls(base.layers, dropout, time_scale)

    def inputs(self, X, t):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.column_stack([X, np.asarray(t, dtype=np.float64) / self.time_scale])

    def log_hazard(self, X, t):
        """Log-hazard for every row of ``X`` (rows) at every time in ``t`` (columns)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        rows = self.inputs(np.repeat(X, t.size, axis=0), np.tile(t, X.shape[0]))
        return self.forward(rows)[:, 0].reshape(X.shape[0], t.size)

    def penultimate(self, X, t):
        """Last hidden activations, shape (rows of X, len(t), width)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        a = self.inputs(np.repeat(X, t.size, axis=0), np.tile(t, X.shape[0]))
        _, cache = self.forward_cache(a)
        feats = cache[-1][0]
        return feats.reshape(X.shape[0], t.size, -1)

    def to_dict(self):
        return {**super().to_dict(), "time_scale": self.time_scale}

    @classmethod
    def from_dict(cls, spec, flat=None):
        base = DenseNet.from_dict(spec, flat)
        return cls(base.layers, base.dropout, spec.get("time_scale", 1.0))


def person_time(X, t_obs, delta, cuts, rows_of=None):
    """Expand subjects into person-time rows over the cells given by ``cuts``.

    Returns ``(subject, t_mid, tau, event)`` arrays. Subjects whose time
    exceeds the last cut contribute censored rows up to it.
    """
    t_obs = np.asarray(t_obs, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    lo, hi = cuts[:-1], cuts[1:]
    end = np.minimum(t_obs[:, None], hi[None, :])
    tau = end - lo[None, :]
    at_risk = tau > 0
    subj, cell = np.nonzero(at_risk)
    tau = tau[subj, cell]
    t_mid = lo[cell] + 0.5 * tau
    in_cell = (t_obs[subj] > lo[cell]) & (t_obs[subj] <= hi[cell])
    event = (in_cell & (delta[subj] == 1)).astype(np.float64)
    return subj, t_mid, tau, event


def person_time_batch(net, X, t_obs, delta, grid, features=None):
    """Grouped Poisson batch (one group per subject).

    With ``features`` (a callable mapping ``(subject, t_mid)`` to network
    inputs) the rows can be fed to a head over cached activations.
    """
    subj, t_mid, tau, event = person_time(X, t_obs, delta, grid.cuts)
    inputs = net.inputs(np.asarray(X)[subj], t_mid) if features is None else features(subj, t_mid)
    return Batch(inputs, y=event, tau=tau, groups=subj, n_groups=len(t_obs))


def default_hazard_config():
    return TrainConfig(lr=1e-3, weight_decay=0.0, batch_size=64, max_epochs=200, patience=10)


def fit_hazard(X, t_obs, delta, train_idx, val_idx, grid=None, rng=None, config=None,
               hidden=(64, 32, 16), dropout=0.2):
    """Train a hazard net on the person-time rows of the training subjects.

    Returns ``(net, TrainResult)``; early stopping watches the Poisson loss
    of the validation subjects.
    """
    grid = grid or TimeGrid()
    rng = np.random.default_rng(rng)
    X = np.asarray(X, dtype=np.float64)
    net = HazardNet.build(X.shape[1], hidden, dropout, time_scale=grid.points[-1], rng=rng)
    tr = person_time_batch(net, X[train_idx], t_obs[train_idx], delta[train_idx], grid)
    va = person_time_batch(net, X[val_idx], t_obs[val_idx], delta[val_idx], grid)
    result = train(net, PoissonLoss(), tr, va, config or default_hazard_config(), rng)
    return net, result


def fit_censoring_model(X, t_obs, delta, train_idx, val_idx, grid=None, rng=None, config=None,
                        hidden=(64, 32, 16), dropout=0.2):
    """Hazard net for the censoring time: censoring (``1 - delta``) is the event."""
    return fit_hazard(X, t_obs, 1.0 - np.asarray(delta), train_idx, val_idx, grid, rng, config,
                      hidden, dropout)


def _log_hazard_fn(net):
    if hasattr(net, "log_hazard"):
        return net.log_hazard
    if callable(net):
        return net
    raise TypeError("expected a hazard model or a callable (X, t) -> log-hazard")


def cumulative_from_log_hazard(log_h, refined):
    """Trapezoid cumulative hazard along the columns of ``log_h``."""
    lam = np.exp(log_h)
    inc = 0.5 * (lam[:, 1:] + lam[:, :-1]) * np.diff(refined)
    return np.concatenate([np.zeros((lam.shape[0], 1)), np.cumsum(inc, axis=1)], axis=1)


def survival_from_hazard(net, X, grid=None, refined=False):
    """``S(t | x) = exp(-int_0^t lambda)`` per row of ``X`` at the grid points.

    ``net`` is a hazard model or any callable ``(X, t) -> log-hazard``.
    With ``refined=True`` the whole integration grid is returned.
    """
    grid = grid or TimeGrid()
    fine = grid.refined
    log_h = np.asarray(_log_hazard_fn(net)(X, fine), dtype=np.float64)
    S = np.exp(-cumulative_from_log_hazard(log_h, fine))
    return S if refined else S[:, grid.point_index]


def marginal_survival(net, X, grid=None):
    """Average of the conditional survival curves over the rows of ``X``."""
    return survival_from_hazard(net, X, grid).mean(axis=0)


def final_layer(net):
    """Single-layer network equal to the last layer of ``net``."""
    last = net.layers[-1]
    return DenseNet([Layer(last.weight.copy(), last.bias.copy(), last.activation)])
