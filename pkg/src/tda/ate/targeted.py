"""Targeting a fitted DragonNet for the ATE."""
from __future__ import annotations

import numpy as np

from ..nn import Batch, ParamPartition
from ..nn.network import activate
from ..targeting import (
    TargetingConfig,
    block_gradients,
    estimand_gradient,
    nested_submodels,
    plateau_select,
    tda_direct,
    tda_run,
)
from .dragonnet import LAST_LAYER, OUTCOME_HEADS, FactualMSELoss
from .estimators import _estimate, clever_covariate, clip_propensity

PARTITIONS = {"last-layer": LAST_LAYER, "outcome-heads": OUTCOME_HEADS}


def parse_blocks(spec):
    """Layer ids from ``"blocks:4,5"`` (or ``"4,5"``)."""
    body = spec.split(":", 1)[1] if spec.startswith("blocks:") else spec
    try:
        ids = tuple(int(tok) for tok in body.split(",") if tok.strip())
    except ValueError:
        raise ValueError(f"bad block spec {spec!r}; expected blocks:<layer>,<layer>,...") from None
    if not ids:
        raise ValueError(f"bad block spec {spec!r}; no layers given")
    return ids


def resolve_partition(model, partition):
    """Partition from a name, ``blocks:<layers>``, a tuple of layer ids, or flat indices."""
    if isinstance(partition, ParamPartition):
        return partition
    if isinstance(partition, str) and partition.startswith("blocks:"):
        ids = parse_blocks(partition)
        if max(ids) >= len(model.layers) or min(ids) < 0:
            raise ValueError(f"block spec {partition!r} names a layer outside 0..{len(model.layers) - 1}")
        return ParamPartition.from_layers(model, ids)
    if isinstance(partition, str):
        try:
            partition = PARTITIONS[partition]
        except KeyError:
            raise ValueError(f"unknown partition {partition!r}; choose from {sorted(PARTITIONS)}") from None
        return ParamPartition.from_layers(model, partition)
    return ParamPartition.from_targets(partition, model.n_params)


def ate_influence(data, clip=0.01, component="residual"):
    """Influence callback evaluated at the current weights.

    ``component="residual"`` returns ``H * (Y - Q_A)``, the part of the ATE
    EIF that is a score of the outcome regression; the remaining term
    ``Q1 - Q0 - psi`` averages to zero at the plug-in ``psi`` and lies
    outside the span of outcome-loss gradients. ``component="full"``
    returns the whole EIF.
    """
    if component not in ("residual", "full"):
        raise ValueError("component must be 'residual' or 'full'")

    def influence(model):
        out = model.forward(data.X)
        g, _ = clip_propensity(out[:, 0], clip)
        q0, q1 = out[:, 1], out[:, 2]
        q_a = np.where(data.a == 1, q1, q0)
        d = clever_covariate(data.a, g) * (data.y - q_a)
        if component == "full":
            d = d + (q1 - q0 - np.mean(q1 - q0))
        return d

    return influence


def targeting_batch(data):
    return Batch(data.X, y=data.y, a=data.a)


def tda_ate(model, data, partition="last-layer", cfg=None, clip=0.01, method=None,
            component="residual"):
    """Target a copy of ``model`` on the full sample.

    Returns ``(AteEstimate, TargetingReport, targeted_model)``.
    """
    model = model.copy()
    part = resolve_partition(model, partition)
    loss = FactualMSELoss(scale=model.y_scale)
    cfg = cfg or TargetingConfig(lam=0.01, penalty="l2", max_iters=100)
    report = tda_run(model, part, loss, targeting_batch(data), ate_influence(data, clip, component), cfg)
    out = model.forward(data.X)
    g, _ = clip_propensity(out[:, 0], clip)
    psi = np.mean(out[:, 2] - out[:, 1])
    if method is None:
        method = {"last-layer": "TdaLast", "outcome-heads": "TdaFull"}.get(partition, "Tda") \
            if isinstance(partition, str) else "Tda"
    est = _estimate(method, psi, data.y, data.a, out[:, 1], out[:, 2], g,
                    converged=report.converged, reason=report.reason,
                    iterations=report.n_updates)
    report.estimates = {"psi": est.psi, "ci_lower": est.ci_lower, "ci_upper": est.ci_upper}
    return est, report, model


def last_layer_features(model, X, a):
    """Derivative of the factual prediction w.r.t. both final head layers."""
    h = model.trunk.forward(X)
    cols = []
    for net, arm in ((model.mu0, 0.0), (model.mu1, 1.0)):
        phi = _hidden(net, h)
        mask = (a == arm).astype(np.float64)[:, None]
        cols.append(model.y_scale * mask * np.column_stack([phi, np.ones(len(a))]))
    return np.hstack(cols)


def _hidden(net, h):
    out = h
    for layer in net.layers[:-1]:
        out = activate(out @ layer.weight.T + layer.bias, layer.activation)
    return out


def tda_direct_ate(model, data, clip=0.01):
    """Regress the clever covariate on last-layer features and step once.

    Returns ``(AteEstimate, DirectResult, targeted_model)``.
    """
    model = model.copy()
    part = resolve_partition(model, "last-layer")
    out = model.forward(data.X)
    g, _ = clip_propensity(out[:, 0], clip)
    H = clever_covariate(data.a, g)
    Phi = last_layer_features(model, data.X, data.a)

    def predict(m):
        o = m.forward(data.X)
        return np.where(data.a == 1, o[:, 2], o[:, 1])

    result = tda_direct(model, part, H, Phi, data.y, predict)
    out = model.forward(data.X)
    psi = np.mean(out[:, 2] - out[:, 1])
    est = _estimate("TdaDirect", psi, data.y, data.a, out[:, 1], out[:, 2], g,
                    epsilon=result.epsilon, rank=result.rank)
    return est, result, model


# layers eligible for plateau selection: outcome heads first, then the trunk
PLATEAU_LAYERS = (5, 7, 4, 6, 1, 0)


def ate_estimand_gradient(model, X):
    n = X.shape[0]

    def dpsi(out):
        g = np.zeros_like(out)
        g[:, 1], g[:, 2] = -1.0 / n, 1.0 / n
        return g

    return estimand_gradient(model, X, dpsi)


def tda_auto_plateau(model, data, cfg=None, clip=0.01, layers=PLATEAU_LAYERS, rel_tol=0.01):
    """Grow the targeted set block by block and stop at the confidence-bound plateau.

    Layers are ranked by the norm of the ATE gradient restricted to them;
    nested unions are targeted in turn. Returns
    ``(AteEstimate, TargetingReport, targeted_model, info)`` for the chosen
    submodel, with ``info`` listing every candidate.
    """
    blocks = [model.layer_slice(i) for i in layers]
    ranking = block_gradients(blocks, ate_estimand_gradient(model, data.X))
    nested = nested_submodels(blocks, ranking)
    fits = []
    for idx in nested:
        part = ParamPartition.from_targets(idx, model.n_params)
        fits.append(tda_ate(model, data, part, cfg, clip, method="TdaPlateau"))
    se = [np.sqrt(np.mean(f[0].eif_values ** 2) / data.n) for f in fits]
    k = plateau_select([(f[0].psi, s) for f, s in zip(fits, se)], rel_tol=rel_tol)
    info = {
        "order": [int(layers[pos]) for pos, _ in ranking],
        "psi": [f[0].psi for f in fits],
        "se": [float(s) for s in se],
        "chosen": int(k),
        "n_params": [int(i.size) for i in nested],
    }
    est, report, targeted = fits[k]
    est.info.update(chosen_blocks=int(k) + 1)
    return est, report, targeted, info
