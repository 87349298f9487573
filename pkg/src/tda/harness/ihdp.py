"""IHDP-style data: CSV loading and a semi-synthetic fallback generator.

The fallback keeps one covariate snapshot fixed across replications (six
standardized continuous columns followed by nineteen binary columns) with a
fixed treatment assignment, and redraws the outcome surface per
replication:

* each coefficient of ``beta`` is drawn from ``beta_values`` with
  probabilities ``beta_probs``;
* control surface ``mu0 = exp((X + offset) @ beta)``;
* treated surface ``mu1 = X @ beta - omega`` with ``omega`` chosen so that
  the sample-average effect ``mean(mu1 - mu0)`` equals ``target_ate``;
* outcomes add unit-variance Gaussian noise to the factual surface.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..ate.data import AteDataset, read_ate_csv


@dataclass(frozen=True)
class IhdpConfig:
    n: int = 747
    n_continuous: int = 6
    n_binary: int = 19
    snapshot_seed: int = 20190601
    binary_probs: tuple = (0.51, 0.36, 0.27, 0.50, 0.14, 0.09, 0.14, 0.37, 0.96, 0.59,
                           0.14, 0.13, 0.16, 0.08, 0.14, 0.14, 0.14, 0.40, 0.11)
    treated_fraction: float = 0.19
    treatment_strength: float = 0.8
    binary_treatment_sd: float = 0.3
    beta_values: tuple = (0.0, 0.075, 0.15, 0.225, 0.3)
    beta_probs: tuple = (0.6, 0.1, 0.1, 0.1, 0.1)
    offset: float = 0.5
    target_ate: float = 4.0
    noise_sd: float = 1.0

    def to_dict(self):
        return asdict(self)


def covariate_snapshot(cfg=IhdpConfig()):
    """Fixed covariates and treatment assignment (same for every replication)."""
    rng = np.random.default_rng(cfg.snapshot_seed)
    n = cfg.n
    # correlated continuous block, then standardized
    L = rng.normal(size=(n, 2))
    cont = rng.normal(size=(n, cfg.n_continuous)) + 0.5 * L[:, [0]]
    cont = (cont - cont.mean(axis=0)) / cont.std(axis=0)
    probs = np.asarray(cfg.binary_probs[: cfg.n_binary])
    shift = 0.6 * L[:, [1]]
    binary = (rng.random((n, cfg.n_binary)) < _sigmoid(_logit(probs) + shift)).astype(float)
    X = np.hstack([cont, binary])
    # treatment favours high values of the continuous block, where the
    # (increasing, convex) control surface is sparsely observed among controls
    w = np.empty(X.shape[1])
    w[: cfg.n_continuous] = cfg.treatment_strength / np.sqrt(cfg.n_continuous)
    w[cfg.n_continuous:] = cfg.binary_treatment_sd * rng.normal(size=cfg.n_binary)
    score = X @ w
    # intercept placing the expected treated fraction at the target
    lo, hi = -20.0, 20.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if _sigmoid(mid + score).mean() < cfg.treated_fraction:
            lo = mid
        else:
            hi = mid
    g_true = _sigmoid(0.5 * (lo + hi) + score)
    a = (rng.random(n) < g_true).astype(float)
    return X, a, g_true


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _logit(p):
    return np.log(p / (1.0 - p))


def response_surface(X, rng, cfg=IhdpConfig()):
    beta = rng.choice(cfg.beta_values, size=X.shape[1], p=cfg.beta_probs)
    mu0 = np.exp((X + cfg.offset) @ beta)
    lin = X @ beta
    omega = np.mean(lin - mu0) - cfg.target_ate
    return mu0, lin - omega, beta


def ihdp_synthesize(seed, n=747, cfg=None, split_seed=None):
    """One replication of the fallback benchmark, with split tags assigned."""
    cfg = cfg or IhdpConfig(n=n)
    if cfg.n != n:
        cfg = IhdpConfig(**{**cfg.to_dict(), "n": n})
    X, a, _ = covariate_snapshot(cfg)
    rng = np.random.default_rng(seed)
    mu0, mu1, _ = response_surface(X, rng, cfg)
    y = np.where(a == 1, mu1, mu0) + cfg.noise_sd * rng.normal(size=n)
    data = AteDataset(X, a, y, mu0, mu1)
    return data.assign_split(seed if split_seed is None else split_seed)


def ihdp_load(path, seed=0):
    """Validated CSV dataset with deterministic stratified split tags."""
    return read_ate_csv(path).assign_split(seed)
