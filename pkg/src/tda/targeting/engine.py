"""Projection-based targeting of a parameter subset.

Each iteration computes per-sample scores ``S`` (n x k) for the targeted
weights, projects the influence values ``D`` onto their span, and moves the
weights along the projection coefficients. With several target parameters
the per-parameter coefficients are blended with weights ``d_k / ||d||``
where ``d_k`` is the mean projected influence of parameter ``k``.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..exceptions import DomainError, InputShapeError
from ..nn import lasso_solve, loss_and_gradient, per_sample_scores, ridge_solve

log = logging.getLogger(__name__)

TOLERANCE_MET = "ToleranceMet"
MAX_ITERS = "MaxIters"
NO_LOSS_IMPROVEMENT = "NoLossImprovement"


class NoLossImprovement(RuntimeError):
    """Every candidate step size was rejected by the line search."""


@dataclass
class TargetingConfig:
    lam: float = 0.01
    penalty: str = "l2"
    max_iters: int = 100
    step_rule: str = "line-search"
    gamma: float = 1.0
    grid_size: int = 13
    newton_anchor: bool = True
    lasso_max_sweeps: int = 10000
    lasso_tol: float = 1e-10

    def __post_init__(self):
        self.penalty = self.penalty.lower()
        if self.penalty not in ("l1", "l2"):
            raise ValueError("penalty must be 'l1' or 'l2'")
        if self.step_rule not in ("line-search", "fixed"):
            raise ValueError("step_rule must be 'line-search' or 'fixed'")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.lam < 0 or (self.penalty == "l1" and self.lam == 0):
            raise ValueError("lambda must be positive (nonnegative for l2)")

    def grid(self, anchor=1.0):
        return anchor * self.gamma * 2.0 ** -np.arange(self.grid_size)


@dataclass
class TargetingReport:
    iterations: list = field(default_factory=list)
    converged: bool = False
    reason: str = MAX_ITERS
    estimates: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def n_updates(self):
        return sum(1 for it in self.iterations if it.get("gamma") is not None)

    @property
    def final(self):
        return self.iterations[-1]

    def to_dict(self):
        return _jsonable(asdict(self))

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def stopping_threshold(sd_proj, n):
    """``sd / (sqrt(n) * ln n)``."""
    if n < 2:
        raise DomainError("stopping threshold needs n >= 2")
    if sd_proj < 0:
        raise DomainError("standard deviation must be nonnegative")
    return sd_proj / (np.sqrt(n) * np.log(n))


def project_influence(D, S, cfg, warm_start=None):
    """Penalized least-squares projection of ``D`` onto the columns of ``S``.

    ``D`` may be an n-vector or an n x K matrix (one column per target).
    ``warm_start`` seeds the lasso iterations.
    Returns ``(alpha, projected, residual_norm)`` with ``residual_norm``
    equal to ``||D - projected|| / sqrt(n)`` per column.
    """
    S = np.asarray(getattr(S, "values", S), dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    if S.ndim != 2 or D.shape[0] != S.shape[0]:
        raise InputShapeError(f"score matrix {S.shape} does not align with influence {D.shape}")
    if cfg.penalty == "l2":
        alpha = ridge_solve(S, D, cfg.lam)
    else:
        alpha = lasso_solve(S, D, cfg.lam, max_sweeps=cfg.lasso_max_sweeps, tol=cfg.lasso_tol,
                            warm_start=warm_start)
    projected = S @ alpha
    resid = np.linalg.norm(D - projected, axis=0) / np.sqrt(D.shape[0])
    return alpha, projected, resid


def combine_directions(alphas, d):
    """``sum_k w_k alpha_k`` with ``w = d / ||d||``; ``None`` when ``d == 0``."""
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    A = np.asarray(alphas, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    elif A.shape[1] != d.size and A.shape[0] == d.size:
        # list of K alpha vectors
        A = A.T
    if A.shape[1] != d.size:
        raise InputShapeError("need one alpha per target parameter")
    norm = np.linalg.norm(d)
    if norm == 0:
        return None
    return A @ (d / norm)


def newton_scale(theta, direction, d0, weights, evaluate, rel=1e-6):
    """Step length minimizing a quadratic model of the loss along the direction.

    The slope along ``-direction`` is ``-weights @ d``; its change over a
    small probe step gives the curvature. Returns ``None`` when the curvature
    is not positive.
    """
    h = rel * (1.0 + np.linalg.norm(theta)) / np.linalg.norm(direction)
    if not np.isfinite(h) or h <= 0:
        return None
    _, d_h = evaluate(theta - h * direction)
    if not np.all(np.isfinite(d_h)):
        return None
    slope0 = -weights @ np.atleast_1d(d0)
    slope_h = -weights @ np.atleast_1d(d_h)
    curvature = (slope_h - slope0) / h
    if not np.isfinite(curvature) or curvature <= 0:
        return None
    return -slope0 / curvature


def targeting_step(theta, alpha, mean_dproj, cfg, evaluate=None):
    """Move ``theta`` along ``-sign(d) * alpha`` (or the blended direction).

    With the fixed rule the step is ``cfg.gamma``. With the line search,
    ``evaluate(theta) -> (loss, d)`` scores each grid candidate; the
    loss-minimizing candidate whose loss does not exceed the current loss
    and whose ``||d||`` does not grow is taken. The grid is anchored at the
    quadratic-model step length when ``cfg.newton_anchor`` is set, at 1
    otherwise. Returns ``(theta, gamma)``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    d_vec = np.atleast_1d(np.asarray(mean_dproj, dtype=np.float64))
    direction = combine_directions(alpha, d_vec)
    if direction is None or not np.any(direction):
        raise NoLossImprovement("no targeting direction")
    if cfg.step_rule == "fixed":
        return theta - cfg.gamma * direction, cfg.gamma
    if evaluate is None:
        raise ValueError("line search needs an evaluate callback")
    loss0, d0 = evaluate(theta)
    d0_norm = np.linalg.norm(np.atleast_1d(d0))
    anchor = 1.0
    if cfg.newton_anchor:
        weights = d_vec / np.linalg.norm(d_vec)
        anchor = newton_scale(theta, direction, d0, weights, evaluate) or 1.0
    best = None
    for gamma in cfg.grid(anchor):
        cand = theta - gamma * direction
        loss, d = evaluate(cand)
        if not np.isfinite(loss) or loss > loss0:
            continue
        if np.linalg.norm(np.atleast_1d(d)) > d0_norm:
            continue
        if best is None or loss < best[0]:
            best = (loss, gamma, cand)
    if best is None:
        raise NoLossImprovement("every step size increased the loss or |P_n D|")
    return best[2], float(best[1])


def tda_run_multi(model, partition, loss, batch, influence, cfg=None, estimand=None):
    """Iterative targeting of ``partition`` for one or more target parameters.

    ``influence(model)`` returns the raw influence values at the current
    weights, shape (n,) or (n, K). The model is updated in place.
    ``estimand(model)``, if given, fills ``report.estimates`` at the end.
    Solver and numerical errors propagate with the partial report attached
    as ``exc.report``.
    """
    cfg = cfg or TargetingConfig()
    report = TargetingReport(config=asdict(cfg))
    start = time.perf_counter()
    n = batch.n_samples
    idx = partition.targ_indices
    alpha = None
    try:
        for t in range(cfg.max_iters + 1):
            S = per_sample_scores(model, partition, loss, batch).values
            D = np.asarray(influence(model), dtype=np.float64)
            D2 = D.reshape(n, -1)
            warm = alpha if alpha is not None and alpha.shape == (S.shape[1], D2.shape[1]) else None
            alpha, proj, resid = project_influence(D2, S, cfg, warm)
            d = proj.mean(axis=0)
            sd = proj.std(axis=0, ddof=1)
            eta = np.array([stopping_threshold(s, n) for s in sd])
            cur_loss, _ = loss_and_gradient(model, loss, batch)
            entry = {
                "iter": t,
                "mean_dproj": d.tolist(),
                "eta": eta.tolist(),
                "gamma": None,
                "alpha_norm": float(np.linalg.norm(alpha)),
                "residual_norm": resid.tolist(),
                "mean_raw_influence": D2.mean(axis=0).tolist(),
                "train_loss": float(cur_loss),
            }
            report.iterations.append(entry)
            if np.all(np.abs(d) <= eta):
                report.converged, report.reason = True, TOLERANCE_MET
                break
            if t >= cfg.max_iters:
                report.reason = MAX_ITERS
                break
            theta = partition.get(model)

            def evaluate(cand):
                partition.set(model, cand)
                value, grad = loss_and_gradient(model, loss, batch, indices=idx)
                return value, grad @ alpha

            try:
                new_theta, gamma = targeting_step(theta, alpha, d, cfg, evaluate)
            except NoLossImprovement:
                partition.set(model, theta)
                report.reason = NO_LOSS_IMPROVEMENT
                break
            partition.set(model, new_theta)
            entry["gamma"] = gamma
            log.debug("iter %d |d|max=%.3g gamma=%g", t, np.abs(d).max(), gamma)
    except Exception as exc:
        report.wall_time = time.perf_counter() - start
        exc.report = report
        raise
    if estimand is not None:
        report.estimates = _jsonable(estimand(model))
    report.wall_time = time.perf_counter() - start
    return report


def tda_run(model, partition, loss, batch, influence, cfg=None, estimand=None):
    """Single-parameter targeting; ``influence(model)`` returns an n-vector."""

    def single(m):
        D = np.asarray(influence(m), dtype=np.float64)
        if D.ndim != 1:
            raise InputShapeError("tda_run expects one influence vector; use tda_run_multi")
        return D

    return tda_run_multi(model, partition, loss, batch, single, cfg, estimand)
