"""Closed-form targeting along a known linear least-favourable direction."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InputShapeError

log = logging.getLogger(__name__)


@dataclass
class DirectResult:
    alpha: np.ndarray
    epsilon: float
    rank: int
    warnings: list = field(default_factory=list)


def tda_direct(model, partition, H, features, y, predict):
    """Fit ``H ~ features @ alpha`` by least squares and move the last layer.

    ``features`` (n x M) are the derivatives of the factual prediction with
    respect to the targeted (linear, final-layer) weights, so a change
    ``eps * alpha`` shifts predictions by ``eps * features @ alpha``.
    ``eps`` minimizes the squared error of ``predict(model)`` against ``y``;
    the outcome loss is quadratic in ``eps`` so the minimizer is exact.
    The model is updated in place.
    """
    Phi = np.asarray(features, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if Phi.shape != (H.size, partition.k):
        raise InputShapeError(
            f"features must be {H.size} x {partition.k}, got {Phi.shape}"
        )
    alpha, _, rank, _ = np.linalg.lstsq(Phi, H, rcond=None)
    warnings = []
    if rank < min(Phi.shape):
        msg = f"feature matrix rank {rank} < {min(Phi.shape)}; minimum-norm solution used"
        log.info(msg)
        warnings.append(msg)
    f = Phi @ alpha
    r = np.asarray(y, dtype=np.float64) - predict(model)
    denom = f @ f
    eps = float(f @ r / denom) if denom > 0 else 0.0
    if eps:
        partition.set(model, partition.get(model) + eps * alpha)
    return DirectResult(alpha, eps, int(rank), warnings)
