"""Simulation model for survival under informative censoring.

Event hazard::

    lambda(t | x) = lambda0(t) * exp(sqrt(t) * x[0:3] @ b_tv
                                     + sum_{j=3..5} exp(x_j * b_j)
                                     + sum_{7 <= j < k <= 10} x_j x_k b_j b_k)

with a Weibull baseline ``lambda0(t) = (a / eta) * (t / eta)**(a - 1)``.
With ``center_exp=True`` each ``exp(x_j * b_j)`` term is replaced by
``exp(x_j * b_j) - 1``, which removes the constant factor ``e**3`` the
literal form carries at the origin (see ``DgpParams``).
Censoring is Weibull with covariate-dependent scale
``eta_c * exp(x @ gamma + sum_{j=1..3} |x_j|**1.5)`` (zero-based indices).

Event times invert the cumulative hazard, integrated by the trapezoid rule
on ``n_substeps`` uniform steps over ``[0, t_max]``; draws beyond ``t_max``
are administratively censored at ``t_max``.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from ..exceptions import NumericalError

log = logging.getLogger(__name__)

MAX_EXPONENT = 50.0


@dataclass(frozen=True)
class DgpParams:
    alpha: float = 1.5
    eta: float = 10.0
    beta_tv: tuple = (0.10, -0.05, 0.05)
    beta_exp: tuple = (0.15, 0.10, -0.10)
    beta_int: tuple = (0.20, -0.15, 0.10, -0.10)
    alpha_c: float = 1.2
    eta_c: float = 1.0
    gamma: tuple = (0.15, 0.10, 0.10, 0.05, 0.05, -0.05, -0.05, -0.10, -0.10, -0.15)
    abs_power: float = 1.5
    center_exp: bool = False
    rho: float = 0.3
    d: int = 10
    t_max: float = 32.0
    n_substeps: int = 2000
    version: int = 1

    def __post_init__(self):
        for name in ("alpha", "eta", "alpha_c", "eta_c"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self):
        return asdict(self)

    def with_(self, **kw):
        return replace(self, **kw)


def config_hash(params):
    doc = json.dumps(params.to_dict(), sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def covariance(d=10, rho=0.3):
    idx = np.arange(d)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def gen_covariates(n, d=10, rho=0.3, rng=None):
    """``N(0, Sigma)`` rows, ``Sigma_ij = rho**|i-j|``, via the Cholesky factor."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(rng)
    L = np.linalg.cholesky(covariance(d, rho))
    return rng.standard_normal((n, d)) @ L.T


def baseline_hazard(t, params):
    t = np.asarray(t, dtype=np.float64)
    a, eta = params.alpha, params.eta
    return (a / eta) * (t / eta) ** (a - 1.0)


def _static_part(X, params):
    """Time-invariant part of the log relative hazard."""
    X = np.atleast_2d(X)
    b_exp = np.asarray(params.beta_exp)
    b_int = np.asarray(params.beta_int)
    out = np.exp(X[:, 3:6] * b_exp).sum(axis=1)
    if params.center_exp:
        out = out - b_exp.size
    Z = X[:, 6:10] * b_int
    for j in range(Z.shape[1]):
        for k in range(j + 1, Z.shape[1]):
            out = out + Z[:, j] * Z[:, k]
    return out


def log_hazard(t, X, params):
    """``log lambda(t | x)`` for every row of ``X`` (rows) and time (columns)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    tv = X[:, :3] @ np.asarray(params.beta_tv)
    expo = _static_part(X, params)[:, None] + np.sqrt(t)[None, :] * tv[:, None]
    if np.any(expo > MAX_EXPONENT):
        log.warning("clamping %d hazard exponents at %g", int(np.sum(expo > MAX_EXPONENT)), MAX_EXPONENT)
        expo = np.minimum(expo, MAX_EXPONENT)
    with np.errstate(divide="ignore"):
        return np.log(baseline_hazard(t, params))[None, :] + expo


def true_hazard(t, x, params):
    """Hazard at scalar or vector ``t`` for one covariate vector ``x``."""
    if np.any(np.asarray(t) <= 0):
        raise ValueError("hazard is evaluated at t > 0")
    out = np.exp(log_hazard(t, np.atleast_2d(x), params))[0]
    return out if np.ndim(t) else float(out[0])


def inversion_grid(params):
    return np.linspace(0.0, params.t_max, params.n_substeps + 1)


def cumulative_hazard(X, params, grid=None, hazard=None):
    """Trapezoid cumulative hazard on ``grid`` (rows of ``X`` x grid points).

    ``hazard(t, X)`` overrides the model hazard (rows x times).
    """
    grid = inversion_grid(params) if grid is None else np.asarray(grid, dtype=np.float64)
    X = np.atleast_2d(X)
    if hazard is None:
        lam = np.exp(log_hazard(grid, X, params))
    else:
        lam = np.asarray(hazard(grid, X), dtype=np.float64)
    steps = np.diff(grid)
    inc = 0.5 * (lam[:, 1:] + lam[:, :-1]) * steps
    return np.concatenate([np.zeros((X.shape[0], 1)), np.cumsum(inc, axis=1)], axis=1)


def invert_cumulative(cum, grid, u):
    """Times solving ``Lambda(t) = -log(u)`` row-wise by linear interpolation.

    Rows whose target exceeds ``Lambda(grid[-1])`` get ``inf``.
    """
    target = -np.log(u)
    out = np.empty(cum.shape[0])
    for i in range(cum.shape[0]):
        c = cum[i]
        if np.any(np.diff(c) < 0):
            raise NumericalError("cumulative hazard is not monotone", sample_id=i)
        if target[i] >= c[-1]:
            out[i] = np.inf
            continue
        j = np.searchsorted(c, target[i], side="right")
        lo, hi = c[j - 1], c[j]
        frac = 0.0 if hi == lo else (target[i] - lo) / (hi - lo)
        out[i] = grid[j - 1] + frac * (grid[j] - grid[j - 1])
    return out


def sample_event_time(X, params, rng=None, u=None, hazard=None, chunk=2000):
    """Event times for each row of ``X`` (``inf`` beyond the inversion grid)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if u is None:
        u = np.random.default_rng(rng).random(X.shape[0])
    u = np.asarray(u, dtype=np.float64)
    grid = inversion_grid(params)
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        cum = cumulative_hazard(X[s:s + chunk], params, grid, hazard)
        out[s:s + chunk] = invert_cumulative(cum, grid, u[s:s + chunk])
    return out


def censoring_scale(X, params):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    lin = X @ np.asarray(params.gamma) + (np.abs(X[:, 1:4]) ** params.abs_power).sum(axis=1)
    return params.eta_c * np.exp(lin)


def sample_censoring_time(X, params, rng=None, u=None):
    X = np.atleast_2d(X)
    if u is None:
        u = np.random.default_rng(rng).random(X.shape[0])
    return censoring_scale(X, params) * (-np.log(u)) ** (1.0 / params.alpha_c)


def true_censoring_survival(t, X, params):
    """``G(t | x) = P(C > t | x)`` (rows x times)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    scale = censoring_scale(X, params)
    return np.exp(-((t[None, :] / scale[:, None]) ** params.alpha_c))


def observe(T, C, t_max):
    """``(T_tilde, Delta)`` with administrative censoring at ``t_max``."""
    t_obs = np.minimum(np.minimum(T, C), t_max)
    delta = ((T <= C) & (T < t_max)).astype(np.float64)
    return t_obs, delta


def censoring_fraction(T, X, u_c, params):
    C = sample_censoring_time(X, params, u=u_c)
    _, delta = observe(T, C, params.t_max)
    return 1.0 - delta.mean()


def calibrate_censoring(params, target=0.30, n=100_000, seed=0, tol=1e-4, max_iter=200):
    """Bisect ``log eta_c`` so the censored fraction hits ``target``.

    Event times and censoring uniforms are drawn once, so the fraction is a
    monotone step function of ``eta_c``. Returns ``(params, fraction)``.
    """
    rng = np.random.default_rng(seed)
    X = gen_covariates(n, params.d, params.rho, rng)
    T = sample_event_time(X, params, rng)
    u_c = rng.random(n)
    lo, hi = -20.0, 20.0
    frac = None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        frac = censoring_fraction(T, X, u_c, params.with_(eta_c=float(np.exp(mid))))
        if abs(frac - target) <= tol:
            break
        # larger eta_c means later censoring, fewer censored
        if frac > target:
            lo = mid
        else:
            hi = mid
    return params.with_(eta_c=float(np.exp(mid))), float(frac)


def true_marginal_survival(grid, params, n=200_000, seed=12345, chunk=5000):
    """Population ``S(t)`` by averaging ``exp(-Lambda(t | x))`` over a large fixed draw."""
    grid = np.asarray(grid, dtype=np.float64)
    fine = inversion_grid(params)
    if grid.max() > fine[-1]:
        raise ValueError("grid exceeds the integration range")
    X = gen_covariates(n, params.d, params.rho, np.random.default_rng(seed))
    acc = np.zeros(grid.size)
    for s in range(0, n, chunk):
        cum = cumulative_hazard(X[s:s + chunk], params, fine)
        S = np.exp(-cum)
        acc += np.array([np.interp(grid, fine, row) for row in S]).sum(axis=0)
    return acc / n


def generate(n, params, rng=None):
    """Simulated ``(X, T_tilde, Delta, T, C)``."""
    rng = np.random.default_rng(rng)
    X = gen_covariates(n, params.d, params.rho, rng)
    T = sample_event_time(X, params, rng)
    C = sample_censoring_time(X, params, rng)
    t_obs, delta = observe(T, C, params.t_max)
    return X, t_obs, delta, T, C
