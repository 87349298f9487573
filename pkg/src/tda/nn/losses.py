"""Per-sample losses on network outputs.

A loss exposes ``value(out, batch)`` (one entry per row) and
``grad(out, batch)`` (derivative of each row's loss with respect to that
row's outputs).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DomainError, InputShapeError


@dataclass
class Batch:
    """Rows fed through a network plus whatever targets the loss reads.

    ``groups`` maps rows to samples when one sample spans several rows
    (person-time expansion); scores are then summed within each sample.
    """

    X: np.ndarray
    y: np.ndarray | None = None
    a: np.ndarray | None = None
    tau: np.ndarray | None = None
    groups: np.ndarray | None = None
    sample_ids: np.ndarray | None = None
    n_groups: int | None = field(default=None)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise InputShapeError(f"X must be 2-D, got shape {self.X.shape}")
        n = self.X.shape[0]
        for name in ("y", "a", "tau", "groups"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val)
                if val.shape[0] != n:
                    raise InputShapeError(f"{name} has {val.shape[0]} rows, X has {n}")
                setattr(self, name, val)
        if self.groups is not None:
            self.groups = self.groups.astype(np.int64)
            if self.n_groups is None:
                self.n_groups = int(self.groups.max()) + 1 if n else 0
        if self.sample_ids is None:
            self.sample_ids = np.arange(self.n_samples)

    @property
    def n_rows(self):
        return self.X.shape[0]

    @property
    def n_samples(self):
        return self.n_groups if self.groups is not None else self.X.shape[0]

    def rows(self, idx):
        """Row subset; grouping is dropped (used for mini-batches)."""
        take = lambda v: None if v is None else v[idx]
        return Batch(self.X[idx], take(self.y), take(self.a), take(self.tau))


class MSELoss:
    """Squared error ``(f(x) - y)^2`` on one output column."""

    name = "mse"

    def __init__(self, column=0):
        self.column = column

    def value(self, out, batch):
        return (out[:, self.column] - batch.y) ** 2

    def grad(self, out, batch):
        g = np.zeros_like(out)
        g[:, self.column] = 2.0 * (out[:, self.column] - batch.y)
        return g


class BCELoss:
    """Binary cross-entropy on a probability-valued output column."""

    name = "bce"

    def __init__(self, column=0, eps=1e-12):
        self.column = column
        self.eps = eps

    def value(self, out, batch):
        p = np.clip(out[:, self.column], self.eps, 1.0 - self.eps)
        return -(batch.y * np.log(p) + (1.0 - batch.y) * np.log1p(-p))

    def grad(self, out, batch):
        p = np.clip(out[:, self.column], self.eps, 1.0 - self.eps)
        g = np.zeros_like(out)
        g[:, self.column] = (p - batch.y) / (p * (1.0 - p))
        return g


def poisson_loss(lambda_hat, delta, tau):
    """Poisson person-time loss ``tau*lambda - delta*log(lambda*tau)``."""
    lambda_hat = np.asarray(lambda_hat, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    if np.any(lambda_hat <= 0) or np.any(tau <= 0):
        raise DomainError("Poisson loss needs positive hazard and exposure time")
    return tau * lambda_hat - np.asarray(delta) * np.log(lambda_hat * tau)


class PoissonLoss:
    """Poisson loss with the network output read as a log-hazard.

    ``batch.y`` holds the event indicator and ``batch.tau`` the time at risk.
    In this parameterization ``d loss / d log-hazard = tau*lambda - delta``.
    """

    name = "poisson"

    def __init__(self, column=0, max_log_hazard=30.0):
        self.column = column
        self.max_log_hazard = max_log_hazard

    def value(self, out, batch):
        eta = np.minimum(out[:, self.column], self.max_log_hazard)
        return batch.tau * np.exp(eta) - batch.y * (eta + np.log(batch.tau))

    def grad(self, out, batch):
        eta = np.minimum(out[:, self.column], self.max_log_hazard)
        g = np.zeros_like(out)
        g[:, self.column] = batch.tau * np.exp(eta) - batch.y
        return g


LOSSES = {"mse": MSELoss, "bce": BCELoss, "poisson": PoissonLoss}


def make_loss(spec):
    if isinstance(spec, str):
        try:
            return LOSSES[spec.lower()]()
        except KeyError:
            raise ValueError(f"unknown loss {spec!r}; choose from {sorted(LOSSES)}") from None
    return spec
