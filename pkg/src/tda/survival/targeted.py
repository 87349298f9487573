"""Targeting a hazard network for the whole marginal survival curve."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import Batch, ParamPartition, PoissonLoss, per_sample_scores
from ..targeting import TargetingConfig, project_influence, tda_run_multi
from .hazard import TimeGrid, cumulative_from_log_hazard, final_layer, person_time

G_MIN = 0.05


def ipcw_influence(t_obs, times, G_hat, S_hat, g_min=G_MIN):
    """IPCW influence ``1(T > t) / G(t | X) - S(t)`` at each time.

    ``G_hat`` is n x K (censoring survival of each subject at each time),
    ``S_hat`` the K current marginal survival values. Returns ``(D, n_floored)``.
    """
    t_obs = np.asarray(t_obs, dtype=np.float64)
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    G = np.asarray(G_hat, dtype=np.float64).reshape(t_obs.size, times.size)
    floored = G < g_min
    G = np.where(floored, g_min, G)
    alive = (t_obs[:, None] > times[None, :]).astype(np.float64)
    D = alive / G - np.asarray(S_hat, dtype=np.float64)[None, :]
    return D, int(floored.sum())


@dataclass
class SurvivalTargetingResult:
    report: object
    initial: np.ndarray
    targeted: np.ndarray
    initial_sd: np.ndarray
    targeted_sd: np.ndarray
    n_floored: int
    net: object

    def ci(self, which="targeted", z=1.96):
        curve = getattr(self, which)
        sd = self.targeted_sd if which == "targeted" else self.initial_sd
        half = z * sd / np.sqrt(self.n)
        return curve - half, curve + half

    @property
    def n(self):
        return self.report.config.get("n", 1)


class CachedHead:
    """Final layer of a hazard net acting on cached penultimate activations.

    Scoring runs without dropout, so the activations feeding the last layer
    do not move while only that layer is updated.
    """

    def __init__(self, net, X, t_obs, delta, grid):
        self.head = final_layer(net)
        self.grid = grid
        n = len(t_obs)
        subj, t_mid, tau, event = person_time(X, t_obs, delta, grid.cuts)
        rows = net.inputs(np.asarray(X)[subj], t_mid)
        _, cache = net.forward_cache(rows)
        self.batch = Batch(cache[-1][0], y=event, tau=tau, groups=subj, n_groups=n)
        fine = grid.refined
        self.fine_features = net.penultimate(X, fine)

    def survival(self, model=None):
        model = model or self.head
        w = model.layers[0]
        log_h = self.fine_features @ w.weight[0] + w.bias[0]
        S = np.exp(-cumulative_from_log_hazard(log_h, self.grid.refined))
        return S[:, self.grid.point_index]


def _projected_sd(head, part, loss, batch, D, cfg):
    S = per_sample_scores(head, part, loss, batch).values
    _, proj, _ = project_influence(D, S, cfg)
    return proj.std(axis=0, ddof=1)


def target_survival_curve(net, X, t_obs, delta, G_hat, grid=None, cfg=None, g_min=G_MIN):
    """Target the final layer of ``net`` so the marginal curve solves the IPCW equations.

    ``G_hat`` holds the censoring survival of each subject at the grid points.
    Returns a :class:`SurvivalTargetingResult`; the targeted network is a
    copy of ``net`` with its last layer replaced.
    """
    grid = grid or TimeGrid()
    cfg = cfg or TargetingConfig(lam=1e-5, penalty="l1", max_iters=200)
    cached = CachedHead(net, X, t_obs, delta, grid)
    head = cached.head
    part = ParamPartition.from_layers(head, [0])
    loss = PoissonLoss()
    floors = []

    def influence(model):
        S_hat = cached.survival(model).mean(axis=0)
        D, nf = ipcw_influence(t_obs, grid.points, G_hat, S_hat, g_min)
        floors.append(nf)
        return D

    initial = cached.survival(head).mean(axis=0)
    init_sd = _projected_sd(head, part, loss, cached.batch, influence(head), cfg)
    report = tda_run_multi(head, part, loss, cached.batch, influence, cfg)
    targeted = cached.survival(head).mean(axis=0)
    tgt_sd = _projected_sd(head, part, loss, cached.batch, influence(head), cfg)
    report.config["n"] = len(t_obs)
    report.estimates = {"survival": targeted.tolist(), "sd": tgt_sd.tolist()}
    out = net.copy()
    out.layers[-1].weight[...] = head.layers[0].weight
    out.layers[-1].bias[...] = head.layers[0].bias
    return SurvivalTargetingResult(report, initial, targeted, init_sd, tgt_sd, floors[0], out)
