"""Scikit-learn style front ends for the two targeting pipelines.

>>> est = DragonNetATE(random_state=0).fit(X, a, y)
>>> est.ate_, est.ci_
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .ate import AteDataset, fit_dragonnet, plugin_ate
from .ate.dragonnet import default_train_config
from .ate.targeted import tda_ate, tda_auto_plateau
from .nn import TrainConfig
from .survival import TimeGrid, fit_censoring_model, fit_hazard, survival_from_hazard, target_survival_curve
from .survival.hazard import default_hazard_config
from .targeting import TargetingConfig


def _train_config(fallback, lr, batch_size, max_epochs, patience):
    return TrainConfig(lr=lr, weight_decay=fallback.weight_decay,
                       batch_size=batch_size or fallback.batch_size,
                       max_epochs=max_epochs or fallback.max_epochs, patience=patience)


class DragonNetATE(BaseEstimator):
    """DragonNet fit followed by targeting of the average treatment effect.

    After ``fit``: ``ate_`` (targeted), ``ate_initial_`` (plug-in),
    ``ci_``, ``report_`` (the targeting report) and ``model_``.
    """

    def __init__(self, hidden=64, partition="last-layer", lam=0.01, penalty="l2", max_iters=100,
                 clip=0.01, lr=1e-3, batch_size=None, max_epochs=None, patience=10,
                 standardize=False, random_state=None):
        self.hidden = hidden
        self.partition = partition
        self.lam = lam
        self.penalty = penalty
        self.max_iters = max_iters
        self.clip = clip
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, a, y):
        X, y = check_X_y(X, y, y_numeric=True)
        a = check_array(np.asarray(a).reshape(-1, 1)).ravel()
        seed = np.random.SeedSequence(self.random_state).generate_state(1)[0]
        data = AteDataset(X, a, y).assign_split(int(seed))
        rng = np.random.default_rng(self.random_state)
        tcfg = _train_config(default_train_config(), self.lr, self.batch_size, self.max_epochs, self.patience)
        model, _ = fit_dragonnet(data, tcfg, rng, hidden=self.hidden, standardize=self.standardize)
        self.ate_initial_ = plugin_ate(model, data, self.clip).psi
        cfg = TargetingConfig(lam=self.lam, penalty=self.penalty, max_iters=self.max_iters)
        if self.partition == "auto-plateau":
            est, report, model, self.selection_ = tda_auto_plateau(model, data, cfg, self.clip)
        else:
            est, report, model = tda_ate(model, data, self.partition, cfg, self.clip)
        self.model_, self.report_ = model, report
        self.ate_ = est.psi
        self.ci_ = (est.ci_lower, est.ci_upper)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Per-row effect estimates ``Q1(x) - Q0(x)`` from the targeted network."""
        check_is_fitted(self, "model_")
        X = check_array(X)
        p = self.model_.predict_nuisance(X)
        return p.q1 - p.q0


class SurvivalTDA(BaseEstimator):
    """Discrete-time hazard network plus targeting of the marginal survival curve.

    After ``fit``: ``survival_`` (targeted curve on ``times_``),
    ``survival_initial_``, ``ci_`` (lower, upper arrays) and ``report_``.
    """

    def __init__(self, hidden=(64, 32, 16), dropout=0.2, horizon=16.0, grid_points=50, lam=1e-5,
                 penalty="l1", max_iters=200, g_min=0.05, lr=1e-3, batch_size=None, max_epochs=None,
                 patience=10, random_state=None):
        self.hidden = hidden
        self.dropout = dropout
        self.horizon = horizon
        self.grid_points = grid_points
        self.lam = lam
        self.penalty = penalty
        self.max_iters = max_iters
        self.g_min = g_min
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.random_state = random_state

    def fit(self, X, time, event):
        X, time = check_X_y(X, time, y_numeric=True)
        event = check_array(np.asarray(event).reshape(-1, 1)).ravel()
        if time.min() < 0 or not np.isin(event, (0, 1)).all():
            raise ValueError("time must be nonnegative and event 0/1")
        rng = np.random.default_rng(self.random_state)
        perm = rng.permutation(X.shape[0])
        cut = int(round(0.8 * X.shape[0]))
        tr, va = np.sort(perm[:cut]), np.sort(perm[cut:])
        grid = TimeGrid.uniform(self.horizon, self.grid_points)
        hcfg = _train_config(default_hazard_config(), self.lr, self.batch_size, self.max_epochs, self.patience)
        hidden = tuple(np.atleast_1d(self.hidden).tolist())
        net, _ = fit_hazard(X, time, event, tr, va, grid, rng, hcfg, hidden, self.dropout)
        cnet, _ = fit_censoring_model(X, time, event, tr, va, grid, rng, hcfg, hidden, self.dropout)
        G_hat = survival_from_hazard(cnet, X, grid)
        cfg = TargetingConfig(lam=self.lam, penalty=self.penalty, max_iters=self.max_iters)
        out = target_survival_curve(net, X, time, event, G_hat, grid, cfg, self.g_min)
        self.times_ = grid.points
        self.survival_ = out.targeted
        self.survival_initial_ = out.initial
        self.ci_ = out.ci("targeted")
        self.report_ = out.report
        self.model_ = out.net
        self.censoring_model_ = cnet
        self.n_features_in_ = X.shape[1]
        return self

    def predict_survival(self, X):
        """Per-row targeted survival curves on ``times_``, shape (n, grid_points)."""
        check_is_fitted(self, "model_")
        X = check_array(X)
        return survival_from_hazard(self.model_, X, TimeGrid.uniform(self.horizon, self.grid_points))
