"""Right-censored datasets and their CSV schema.

CSV header: ``x1..x10, time, event``. Simulated files carry a sidecar
``<name>.meta.json`` holding the generator parameters and their hash.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..exceptions import InputShapeError, SchemaError
from .dgp import DgpParams, config_hash, generate

N_COVARIATES = 10


@dataclass
class SurvivalDataset:
    X: np.ndarray
    t_obs: np.ndarray
    delta: np.ndarray
    true_S: Callable | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.t_obs = np.asarray(self.t_obs, dtype=np.float64).reshape(-1)
        delta = np.asarray(self.delta).reshape(-1)
        if self.X.ndim != 2 or self.X.shape[0] != self.t_obs.size or delta.size != self.t_obs.size:
            raise InputShapeError("X, time and event must have matching rows")
        if not (np.isfinite(self.t_obs).all() and (self.t_obs >= 0).all()):
            raise SchemaError("observed times must be finite and nonnegative", column="time")
        if not np.isin(delta, (0, 1)).all():
            raise SchemaError("event indicator must be 0/1", column="event")
        if not np.isfinite(self.X).all():
            raise SchemaError("non-finite covariate values", column=None)
        self.delta = delta.astype(np.float64)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def censored_fraction(self):
        return float(1.0 - self.delta.mean())

    def split(self, seed, train_fraction=0.8):
        """Deterministic ``(train_idx, validation_idx)``."""
        perm = np.random.default_rng(seed).permutation(self.n)
        cut = int(round(train_fraction * self.n))
        return np.sort(perm[:cut]), np.sort(perm[cut:])


def simulate_survival(n, params, rng=None):
    X, t_obs, delta, _, _ = generate(n, params, rng)
    return SurvivalDataset(X, t_obs, delta)


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_survival_csv(data, path, params=None, extra=None):
    path = Path(path)
    cols = [f"x{j}" for j in range(1, data.X.shape[1] + 1)] + ["time", "event"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(data.n):
            w.writerow([repr(float(v)) for v in data.X[i]] + [repr(float(data.t_obs[i])), int(data.delta[i])])
    if params is not None:
        meta = {"dgp": params.to_dict(), "dgp_hash": config_hash(params), **(extra or {})}
        sidecar_path(path).write_text(json.dumps(meta, indent=2))
    return path


def read_survival_csv(path, n_covariates=N_COVARIATES):
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
    required = [f"x{j}" for j in range(1, n_covariates + 1)] + ["time", "event"]
    for col in required:
        if col not in header:
            raise SchemaError(f"{path}: missing column {col!r}", column=col)
    pos = {h: i for i, h in enumerate(header)}
    try:
        table = np.array([[float(r[pos[c]]) for c in required] for r in rows])
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed row ({exc})", column=None) from exc
    if table.size == 0:
        raise SchemaError(f"{path} has no data rows", column=None)
    return SurvivalDataset(table[:, :n_covariates], table[:, -2], table[:, -1])


def read_sidecar(path):
    """Generator metadata written next to a simulated CSV, or ``None``."""
    meta = sidecar_path(path)
    if not meta.exists():
        return None
    doc = json.loads(meta.read_text())
    doc["dgp"] = DgpParams(**{k: tuple(v) if isinstance(v, list) else v for k, v in doc["dgp"].items()})
    return doc
