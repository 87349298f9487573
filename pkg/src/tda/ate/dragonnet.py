"""Three-headed network for treatment-effect estimation.

Output columns are ``[g(x), mu0(x), mu1(x)]``: a propensity in (0, 1) and
two outcome regressions on the original outcome scale. Outcome heads may
work internally on a standardized scale (``y_loc``, ``y_scale`` from the
training split); the identity affine is the default.
"""
from __future__ import annotations

import numpy as np

from ..nn import Batch, DenseNet, TrainConfig, train
from ..nn.checkpoint import register
from ..nn.network import ParameterVectorMixin, mean_gradient
from .estimators import NuisancePredictions, clip_propensity

# flat-layout layer ids
TRUNK, PROPENSITY, MU0, MU1 = (0, 1), (2, 3), (4, 5), (6, 7)
LAST_LAYER = (MU0[-1], MU1[-1])
OUTCOME_HEADS = MU0 + MU1


@register
class DragonNet(ParameterVectorMixin):
    """Shared trunk with a propensity head and two outcome heads.

    Flat parameter order: trunk, propensity head, control head, treated head.
    """

    def __init__(self, trunk, propensity, mu0, mu1, y_loc=0.0, y_scale=1.0):
        self.trunk = trunk
        self.propensity = propensity
        self.mu0 = mu0
        self.mu1 = mu1
        self.y_loc = float(y_loc)
        self.y_scale = float(y_scale)

    @classmethod
    def build(cls, n_features, hidden=64, rng=None):
        rng = np.random.default_rng(rng)
        trunk = DenseNet.from_sizes([n_features, hidden, hidden], ["elu", "elu"], rng=rng)
        prop = DenseNet.from_sizes([hidden, hidden, 1], ["elu", "sigmoid"], rng=rng)
        mu0 = DenseNet.from_sizes([hidden, hidden, 1], ["elu", "identity"], rng=rng)
        mu1 = DenseNet.from_sizes([hidden, hidden, 1], ["elu", "identity"], rng=rng)
        return cls(trunk, prop, mu0, mu1)

    @property
    def subnets(self):
        return (self.trunk, self.propensity, self.mu0, self.mu1)

    @property
    def layers(self):
        return [layer for net in self.subnets for layer in net.layers]

    @property
    def n_inputs(self):
        return self.trunk.n_inputs

    def forward(self, X, training=False, rng=None):
        return self.forward_cache(np.atleast_2d(X), training, rng)[0]

    __call__ = forward

    def forward_cache(self, X, training=False, rng=None):
        h, c_trunk = self.trunk.forward_cache(X, training, rng)
        g, c_prop = self.propensity.forward_cache(h, training, rng)
        m0, c_0 = self.mu0.forward_cache(h, training, rng)
        m1, c_1 = self.mu1.forward_cache(h, training, rng)
        out = np.column_stack([
            g[:, 0],
            self.y_loc + self.y_scale * m0[:, 0],
            self.y_loc + self.y_scale * m1[:, 0],
        ])
        return out, (c_trunk, c_prop, c_0, c_1)

    def backward(self, cache, grad_out):
        c_trunk, c_prop, c_0, c_1 = cache
        grad_h = None
        head_terms = []
        for net, c, col, scale in ((self.propensity, c_prop, 0, 1.0),
                                   (self.mu0, c_0, 1, self.y_scale),
                                   (self.mu1, c_1, 2, self.y_scale)):
            g = grad_out[:, [col]] * scale
            if not np.any(g):
                head_terms.append([None] * len(net.layers))
                continue
            gh, terms = net.backward(c, g)
            grad_h = gh if grad_h is None else grad_h + gh
            head_terms.append(terms)
        if grad_h is None:
            return None, [None] * len(self.layers)
        grad_in, trunk_terms = self.trunk.backward(c_trunk, grad_h)
        return grad_in, trunk_terms + [t for terms in head_terms for t in terms]

    def predict_nuisance(self, X):
        out = self.forward(X)
        return NuisancePredictions(out[:, 0], out[:, 1], out[:, 2])

    def to_dict(self):
        return {
            "subnets": [net.to_dict() for net in self.subnets],
            "y_loc": self.y_loc,
            "y_scale": self.y_scale,
        }

    @classmethod
    def from_dict(cls, spec, flat=None):
        nets = [DenseNet.from_dict(s) for s in spec["subnets"]]
        model = cls(*nets, y_loc=spec["y_loc"], y_scale=spec["y_scale"])
        if flat is not None:
            model.set_flat_params(flat)
        return model


class FactualMSELoss:
    """Squared error of the factual outcome head, divided by ``scale**2``."""

    name = "factual-mse"

    def __init__(self, scale=1.0):
        self.scale = float(scale)

    def value(self, out, batch):
        q_a = np.where(batch.a == 1, out[:, 2], out[:, 1])
        return ((q_a - batch.y) / self.scale) ** 2

    def grad(self, out, batch):
        g = np.zeros_like(out)
        q_a = np.where(batch.a == 1, out[:, 2], out[:, 1])
        d = 2.0 * (q_a - batch.y) / self.scale**2
        treated = batch.a == 1
        g[treated, 2] = d[treated]
        g[~treated, 1] = d[~treated]
        return g


class DragonNetLoss:
    """Propensity cross-entropy plus factual outcome MSE, equally weighted."""

    name = "dragonnet"

    def __init__(self, scale=1.0, eps=1e-7):
        self.outcome = FactualMSELoss(scale)
        self.eps = eps

    def value(self, out, batch):
        p = np.clip(out[:, 0], self.eps, 1.0 - self.eps)
        bce = -(batch.a * np.log(p) + (1 - batch.a) * np.log1p(-p))
        return bce + self.outcome.value(out, batch)

    def grad(self, out, batch):
        g = self.outcome.grad(out, batch)
        p = np.clip(out[:, 0], self.eps, 1.0 - self.eps)
        g[:, 0] = (p - batch.a) / (p * (1.0 - p))
        return g


class TargetedRegLoss(DragonNetLoss):
    """DragonNet loss plus ``lam * (Y - Q_A - eps * H)^2`` with a learned ``eps``.

    ``eps`` lives on the outcome scale and starts at 0; the penalty is
    divided by ``scale**2`` like the outcome MSE.
    """

    name = "targeted-regularization"

    def __init__(self, lam=0.01, scale=1.0, clip=0.01):
        super().__init__(scale)
        self.lam = float(lam)
        self.clip = clip
        self.extra = np.zeros(1)

    @property
    def epsilon(self):
        return float(self.extra[0])

    def _parts(self, out, batch):
        g_raw = out[:, 0]
        g = np.clip(g_raw, self.clip, 1.0 - self.clip)
        a = batch.a
        h = a / g - (1 - a) / (1 - g)
        q_a = np.where(a == 1, out[:, 2], out[:, 1])
        u = batch.y - q_a - self.epsilon * h
        return g_raw, g, h, u

    def value(self, out, batch):
        _, _, _, u = self._parts(out, batch)
        return super().value(out, batch) + self.lam * (u / self.outcome.scale) ** 2

    def loss_and_gradient(self, model, batch, training=False, rng=None):
        out, cache = model.forward_cache(batch.X, training=training, rng=rng)
        g_raw, g, h, u = self._parts(out, batch)
        s2 = self.outcome.scale**2
        grad_out = super().grad(out, batch)
        coef = -2.0 * self.lam * u / s2
        treated = batch.a == 1
        grad_out[treated, 2] += coef[treated]
        grad_out[~treated, 1] += coef[~treated]
        inside = (g_raw > self.clip) & (g_raw < 1.0 - self.clip)
        dh_dg = -batch.a / g**2 - (1 - batch.a) / (1 - g) ** 2
        grad_out[:, 0] += np.where(inside, coef * self.epsilon * dh_dg, 0.0)
        _, terms = model.backward(cache, grad_out)
        n = batch.n_rows
        grad = mean_gradient(model.layers, terms, n)
        d_eps = np.mean(coef * h)
        value = np.mean(super().value(out, batch) + self.lam * u**2 / s2)
        return value, np.concatenate([grad, [d_eps]])


def _batches(data, train_idx, val_idx):
    tr = Batch(data.X[train_idx], y=data.y[train_idx], a=data.a[train_idx])
    va = Batch(data.X[val_idx], y=data.y[val_idx], a=data.a[val_idx])
    return tr, va


def default_train_config():
    return TrainConfig(lr=1e-3, weight_decay=1e-5, batch_size=128, max_epochs=300, patience=10)


def fit_dragonnet(data, config=None, rng=None, hidden=64, loss=None, standardize=False):
    """Train a DragonNet on the train split with early stopping on validation.

    With ``standardize`` the outcome heads learn the train-split z-scored
    outcome; otherwise they work on the raw scale.
    Returns ``(model, TrainResult)``.
    """
    rng = np.random.default_rng(rng)
    train_idx, val_idx = data.train_indices(), data.validation_indices()
    model = DragonNet.build(data.X.shape[1], hidden=hidden, rng=rng)
    y_tr = data.y[train_idx]
    if standardize:
        model.y_loc = float(np.mean(y_tr))
        model.y_scale = float(np.std(y_tr)) or 1.0
    if loss is None:
        loss = DragonNetLoss(scale=model.y_scale)
    else:
        loss.outcome.scale = model.y_scale
    tr, va = _batches(data, train_idx, val_idx)
    result = train(model, loss, tr, va, config or default_train_config(), rng=rng)
    return model, result


def treg_train(data, lambda_treg=0.01, config=None, rng=None, hidden=64, clip=0.01,
               standardize=False):
    """Train with targeted regularization; returns ``(model, epsilon, TrainResult)``."""
    if lambda_treg < 0:
        raise ValueError("lambda_treg must be nonnegative")
    loss = TargetedRegLoss(lam=lambda_treg, clip=clip)
    model, result = fit_dragonnet(data, config, rng, hidden, loss=loss, standardize=standardize)
    return model, loss.epsilon, result


def treg_predictions(model, X, epsilon, clip=0.01):
    """Outcome heads perturbed by ``epsilon * H(a, g)``."""
    out = model.forward(X)
    g, _ = clip_propensity(out[:, 0], clip)
    return NuisancePredictions(g, out[:, 1] - epsilon / (1.0 - g), out[:, 2] + epsilon / g)
