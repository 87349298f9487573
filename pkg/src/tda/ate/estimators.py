"""ATE influence function, comparison estimators and Wald intervals."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..exceptions import DegenerateDesignError, DomainError

log = logging.getLogger(__name__)

Z_95 = 1.96
METHODS = ("Plugin", "TReg", "AIPW", "PostTMLE", "TdaLast", "TdaFull", "TdaDirect")


class NuisancePredictions(NamedTuple):
    """Propensity ``g`` and outcome regressions ``q0``, ``q1`` at each row."""

    g: np.ndarray
    q0: np.ndarray
    q1: np.ndarray


@dataclass
class AteEstimate:
    psi: float
    eif_values: np.ndarray
    ci_lower: float
    ci_upper: float
    method: str
    info: dict = field(default_factory=dict)

    @property
    def ci_width(self):
        return self.ci_upper - self.ci_lower

    def covers(self, truth):
        return self.ci_lower <= truth <= self.ci_upper


def clip_propensity(g, clip=0.01):
    """Clip to ``[clip, 1 - clip]``; returns the clipped array and the count."""
    g = np.asarray(g, dtype=np.float64)
    clipped = np.clip(g, clip, 1.0 - clip)
    n_clipped = int(np.count_nonzero(clipped != g))
    if n_clipped:
        log.debug("clipped %d propensity values to [%g, %g]", n_clipped, clip, 1 - clip)
    return clipped, n_clipped


def clever_covariate(a, g):
    g = np.asarray(g, dtype=np.float64)
    if np.any((g <= 0) | (g >= 1)):
        raise DomainError("propensity must lie strictly inside (0, 1)")
    a = np.asarray(a, dtype=np.float64)
    return a / g - (1.0 - a) / (1.0 - g)


def eif_ate(y, a, q0, q1, g, psi):
    """Efficient influence function of the ATE at ``(Q, g, psi)``."""
    a = np.asarray(a, dtype=np.float64)
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    q_a = np.where(a == 1, q1, q0)
    return clever_covariate(a, g) * (np.asarray(y) - q_a) + (q1 - q0 - psi)


def wald_ci(psi, eif_values, z=Z_95):
    """``psi +/- z * sqrt(mean(eif^2) / n)`` (uncentered second moment)."""
    eif_values = np.asarray(eif_values, dtype=np.float64)
    n = eif_values.size
    if n < 2:
        raise ValueError("a Wald interval needs at least two influence values")
    half = z * np.sqrt(np.mean(eif_values**2) / n)
    return psi - half, psi + half


def _estimate(method, psi, y, a, q0, q1, g, **info):
    eif = eif_ate(y, a, q0, q1, g, psi)
    lo, hi = wald_ci(psi, eif)
    return AteEstimate(float(psi), eif, float(lo), float(hi), method, info)


def nuisance(model, X=None, clip=0.01):
    """Clipped propensity and outcome predictions from a model or a tuple."""
    if isinstance(model, NuisancePredictions):
        pred = model
    else:
        out = model.forward(X)
        pred = NuisancePredictions(out[:, 0], out[:, 1], out[:, 2])
    g, n_clipped = clip_propensity(pred.g, clip)
    return NuisancePredictions(g, np.asarray(pred.q0, float), np.asarray(pred.q1, float)), n_clipped


def plugin_ate(model, data, clip=0.01):
    p, n_clip = nuisance(model, data.X, clip)
    psi = np.mean(p.q1 - p.q0)
    return _estimate("Plugin", psi, data.y, data.a, p.q0, p.q1, p.g, n_clipped=n_clip)


def aipw_ate(model, data, clip=0.01):
    p, n_clip = nuisance(model, data.X, clip)
    h = clever_covariate(data.a, p.g)
    q_a = np.where(data.a == 1, p.q1, p.q0)
    psi = np.mean(p.q1 - p.q0 + h * (data.y - q_a))
    return _estimate("AIPW", psi, data.y, data.a, p.q0, p.q1, p.g, n_clipped=n_clip)


def post_tmle(model, data, clip=0.01):
    """One linear fluctuation ``Q_a + eps * H(a, g)`` with closed-form eps."""
    p, n_clip = nuisance(model, data.X, clip)
    h = clever_covariate(data.a, p.g)
    denom = np.sum(h**2)
    if denom == 0:
        raise DegenerateDesignError("clever covariate is identically zero")
    q_a = np.where(data.a == 1, p.q1, p.q0)
    eps = np.sum(h * (data.y - q_a)) / denom
    q1 = p.q1 + eps / p.g
    q0 = p.q0 - eps / (1.0 - p.g)
    psi = np.mean(q1 - q0)
    q_star = np.where(data.a == 1, q1, q0)
    score = np.mean(h * (data.y - q_star))
    return _estimate("PostTMLE", psi, data.y, data.a, q0, q1, p.g,
                     n_clipped=n_clip, epsilon=float(eps), score_mean=float(score))
