"""Kaplan-Meier survival with Greenwood variance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class KmResult:
    survival: np.ndarray
    variance: np.ndarray
    event_times: np.ndarray
    degenerate: bool = False

    def ci(self, z=1.96):
        half = z * np.sqrt(self.variance)
        return self.survival - half, self.survival + half


def km_estimate(t_obs, delta, grid):
    """Product-limit curve and Greenwood variance at the grid points.

    The step function is right-continuous. At an event time where every
    subject at risk fails, the Greenwood term uses ``d / (n * max(n - d, 1))``
    and ``degenerate`` is set.
    """
    t_obs = np.asarray(t_obs, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    if t_obs.size == 0:
        raise ValueError("Kaplan-Meier needs at least one observation")
    times = np.unique(t_obs[delta == 1])
    order = np.sort(t_obs)
    at_risk = order.size - np.searchsorted(order, times, side="left")
    ev_sorted = np.sort(t_obs[delta == 1])
    deaths = np.searchsorted(ev_sorted, times, side="right") - np.searchsorted(ev_sorted, times, side="left")
    surv = np.cumprod(1.0 - deaths / at_risk)
    degenerate = bool(np.any(at_risk == deaths))
    terms = deaths / (at_risk * np.maximum(at_risk - deaths, 1))
    green = np.cumsum(terms)
    # step index: number of event times <= t
    idx = np.searchsorted(times, grid, side="right")
    S = np.where(idx > 0, surv[np.maximum(idx - 1, 0)], 1.0) if times.size else np.ones(grid.size)
    G = np.where(idx > 0, green[np.maximum(idx - 1, 0)], 0.0) if times.size else np.zeros(grid.size)
    return KmResult(S, S ** 2 * G, times, degenerate)
