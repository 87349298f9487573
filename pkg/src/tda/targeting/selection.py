"""Submodel choice: gradient-ranked parameter blocks and plateau selection."""
from __future__ import annotations

import numpy as np

from ..nn.network import mean_gradient


def estimand_gradient(model, X, dpsi_dout):
    """Flat gradient of ``psi = mean_i f(out_i)`` by the chain rule.

    ``dpsi_dout(out)`` returns d psi / d out per row (already divided by n).
    """
    out, cache = model.forward_cache(np.asarray(X, dtype=np.float64))
    _, terms = model.backward(cache, dpsi_dout(out))
    return mean_gradient(model.layers, terms, 1.0)


def block_gradients(blocks, grad):
    """Rank index blocks by ``||grad[block]||`` (descending, ties by index).

    Returns a list of ``(block_position, norm)``.
    """
    grad = np.asarray(grad, dtype=np.float64)
    norms = [float(np.linalg.norm(grad[np.asarray(b, dtype=np.int64)])) for b in blocks]
    order = sorted(range(len(blocks)), key=lambda i: (-norms[i], i))
    return [(i, norms[i]) for i in order]


def nested_submodels(blocks, ranking, sizes=None):
    """Cumulative unions of the ranked blocks: ``M_1 ⊂ M_2 ⊂ ...``."""
    out, acc = [], np.empty(0, dtype=np.int64)
    for pos, _ in ranking:
        acc = np.union1d(acc, np.asarray(blocks[pos], dtype=np.int64))
        out.append(acc.copy())
    if sizes is not None:
        out = [out[s - 1] for s in sizes]
    return out


def plateau_select(reports, z=1.96, rel_tol=0.01):
    """Choose a submodel from nested ``(psi_k, se_k)`` results.

    The trend of ``psi`` from the first to the last entry picks the tracked
    bound: the lower bound when ``psi`` rises, the upper bound when it
    falls. Walking up the sequence, selection stops at the first ``k`` whose
    successor fails to move the tracked bound further in the trend
    direction by more than ``rel_tol`` times the bound's scale.
    """
    reports = [(float(p), float(s)) for p, s in reports]
    if len(reports) <= 1:
        return 0
    psi = np.array([p for p, _ in reports])
    se = np.array([s for _, s in reports])
    rising = psi[-1] >= psi[0]
    bound = psi - z * se if rising else psi + z * se
    sign = 1.0 if rising else -1.0
    for k in range(len(reports) - 1):
        gain = sign * (bound[k + 1] - bound[k])
        scale = max(abs(bound[k]), z * se[k], 1e-12)
        if gain <= rel_tol * scale:
            return k
    return len(reports) - 1
