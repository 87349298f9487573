"""Treatment/outcome datasets and their CSV schema.

CSV header, in order: ``x1..x25, treatment, outcome`` followed optionally by
``mu0, mu1`` (noiseless potential outcomes, simulation only).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..exceptions import InputShapeError, SchemaError

N_COVARIATES = 25
TRAIN, VALIDATION = "train", "validation"


def covariate_columns(d=N_COVARIATES):
    return [f"x{j}" for j in range(1, d + 1)]


@dataclass
class AteDataset:
    """Covariates ``X``, binary treatment ``a`` and outcome ``y``.

    ``split`` tags each row ``train`` or ``validation``; the targeting set
    is always the full sample.
    """

    X: np.ndarray
    a: np.ndarray
    y: np.ndarray
    mu0: np.ndarray | None = None
    mu1: np.ndarray | None = None
    true_ate: float | None = None
    split: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        a = np.asarray(self.a).reshape(-1)
        if self.X.ndim != 2 or self.X.shape[0] != a.size or self.y.size != a.size:
            raise InputShapeError("X, treatment and outcome must have matching rows")
        if not np.isin(a, (0, 1)).all():
            raise SchemaError("treatment must be binary 0/1", column="treatment")
        self.a = a.astype(np.float64)
        for name in ("mu0", "mu1"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=np.float64).reshape(-1))
        if not (np.isfinite(self.X).all() and np.isfinite(self.y).all()):
            raise SchemaError("missing or non-finite values", column=None)
        if self.true_ate is None and self.mu0 is not None and self.mu1 is not None:
            self.true_ate = float(np.mean(self.mu1 - self.mu0))
        if self.split is None:
            self.split = np.full(self.n, TRAIN, dtype=object)

    @property
    def n(self):
        return self.X.shape[0]

    def assign_split(self, seed, train_fraction=0.8):
        """Stratified-by-treatment 80/20 split, deterministic in ``seed``."""
        rng = np.random.default_rng(seed)
        split = np.full(self.n, VALIDATION, dtype=object)
        for arm in (0.0, 1.0):
            idx = np.flatnonzero(self.a == arm)
            rng.shuffle(idx)
            split[idx[: int(round(train_fraction * idx.size))]] = TRAIN
        self.split = split
        return self

    def train_indices(self):
        return np.flatnonzero(self.split == TRAIN)

    def validation_indices(self):
        idx = np.flatnonzero(self.split == VALIDATION)
        # no held-out rows: validate on the training rows
        return idx if idx.size else self.train_indices()

    def subset(self, idx):
        take = lambda v: None if v is None else v[idx]
        return AteDataset(self.X[idx], self.a[idx], self.y[idx], take(self.mu0),
                          take(self.mu1), None, self.split[idx])


def write_ate_csv(data, path):
    path = Path(path)
    cols = covariate_columns(data.X.shape[1]) + ["treatment", "outcome"]
    extra = data.mu0 is not None and data.mu1 is not None
    if extra:
        cols += ["mu0", "mu1"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.X[i]] + [int(data.a[i]), repr(float(data.y[i]))]
            if extra:
                row += [repr(float(data.mu0[i])), repr(float(data.mu1[i]))]
            w.writerow(row)
    return path


def read_ate_csv(path, n_covariates=N_COVARIATES):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}", column=None) from exc
    if header is None:
        raise SchemaError(f"{path} is empty", column=None)
    header = [h.strip() for h in header]
    required = covariate_columns(n_covariates) + ["treatment", "outcome"]
    for col in required:
        if col not in header:
            raise SchemaError(f"{path}: missing column {col!r}", column=col)
    pos = {h: i for i, h in enumerate(header)}
    try:
        table = np.array([[float(r[pos[c]]) for c in header if c in pos] for r in rows])
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed row ({exc})", column=None) from exc
    if table.size == 0:
        raise SchemaError(f"{path} has no data rows", column=None)
    col = lambda name: table[:, pos[name]]
    X = np.column_stack([col(c) for c in covariate_columns(n_covariates)])
    has_mu = "mu0" in pos and "mu1" in pos
    return AteDataset(X, col("treatment"), col("outcome"),
                      col("mu0") if has_mu else None, col("mu1") if has_mu else None)
