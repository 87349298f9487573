"""Penalized least-squares solvers used for influence-function projection."""
from __future__ import annotations

import numpy as np
from scipy import linalg

from ..exceptions import ConvergenceError, InputShapeError, SingularSystemError


def _check_design(G, r):
    G = np.asarray(G, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] < 1 or G.shape[1] < 1:
        raise InputShapeError(f"design must be a nonempty 2-D array, got shape {G.shape}")
    if r.shape[0] != G.shape[0]:
        raise InputShapeError(f"response has {r.shape[0]} rows, design has {G.shape[0]}")
    return G, r


def ridge_solve(G, r, lam):
    """Solve ``(G'G + lam I) alpha = G'r`` by Cholesky factorization.

    When ``G`` has more columns than rows the equivalent dual system
    ``alpha = G'(GG' + lam I)^{-1} r`` is factorized instead. ``r`` may be a
    matrix of several right-hand sides.
    """
    G, r = _check_design(G, r)
    if lam < 0:
        raise ValueError("ridge penalty must be nonnegative")
    n, k = G.shape
    dual = k > n
    A = G @ G.T if dual else G.T @ G
    A[np.diag_indices_from(A)] += lam
    rhs = r if dual else G.T @ r
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SingularSystemError(
            f"normal equations are not positive definite (lambda={lam})"
        ) from exc
    sol = linalg.cho_solve(factor, rhs)
    if not np.all(np.isfinite(sol)):
        raise SingularSystemError(f"non-finite ridge solution (lambda={lam})")
    return G.T @ sol if dual else sol


def _smooth_objective(gram, c, t, x):
    return x @ gram @ x - 2.0 * c @ x + 2.0 * t * np.abs(x).sum()


def _feature_sign(gram, c, t, x, max_iter=500):
    """Exact minimizer of ``x'Gx - 2c'x + 2t|x|_1`` by feature-sign search.

    Starts from ``x`` and alternates exact solves on the active set (with a
    line search over sign changes) and activation of the worst violator.
    Returns ``None`` if an active Gram block is singular or the iteration
    cap is hit.
    """
    x = x.copy()
    slack = 1e-10 * max(t, np.abs(c).max(), 1e-300)
    for _ in range(max_iter):
        grad = c - gram @ x
        act = x != 0
        viol = np.where(act, 0.0, np.abs(grad) - t)
        opt_active = np.all(np.abs(grad[act] - t * np.sign(x[act])) <= slack)
        if opt_active:
            j = int(np.argmax(viol))
            if viol[j] <= slack:
                return x
            x_sign = np.sign(x)
            x_sign[j] = np.sign(grad[j])
        else:
            x_sign = np.sign(x)
        A = x_sign != 0
        try:
            new_a = np.linalg.solve(gram[np.ix_(A, A)], c[A] - t * x_sign[A])
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(new_a)):
            return None
        new = np.zeros_like(x)
        new[A] = new_a
        # candidates: the solve itself and every zero crossing on the way
        d = new - x
        cross = np.flatnonzero((x != 0) & (np.sign(new) != np.sign(x)))
        cands = [new]
        for j in cross:
            p = x - (x[j] / d[j]) * d
            p[j] = 0.0
            cands.append(p)
        vals = [_smooth_objective(gram, c, t, p) for p in cands]
        best = cands[int(np.argmin(vals))]
        x = best
    return None


def lasso_objective(G, r, alpha, lam):
    resid = r - G @ alpha
    return np.mean(resid**2, axis=0) + lam * np.abs(alpha).sum(axis=0)


def lasso_solve(G, r, lam, max_sweeps=10000, tol=1e-12, warm_start=None, return_trace=False,
                polish_every=10):
    """Coordinate descent for ``(1/n)||r - G alpha||^2 + lam ||alpha||_1``.

    Columns are rescaled internally to unit mean square and the solution is
    mapped back, so the penalty acts on the standardized coefficients.
    All-zero columns get a zero coefficient. ``r`` may hold several
    right-hand sides as columns; they are solved simultaneously.

    Every ``polish_every`` sweeps the iterate seeds an exact feature-sign
    active-set search; iteration stops once it succeeds for every column.
    """
    G, r = _check_design(G, r)
    if lam <= 0:
        raise ValueError("lasso penalty must be positive")
    vector = r.ndim == 1
    R = r[:, None] if vector else r
    n, k = G.shape
    scale = np.sqrt(np.mean(G**2, axis=0))
    live = scale > 0
    Z = np.zeros_like(G)
    Z[:, live] = G[:, live] / scale[live]
    gram = Z.T @ Z / n
    corr = Z.T @ R / n
    beta = np.zeros((k, R.shape[1]))
    if warm_start is not None:
        ws = np.asarray(warm_start, dtype=np.float64).reshape(k, -1)
        beta = np.where(live[:, None], ws * scale[:, None], 0.0)
    Gb = gram @ beta
    thresh = lam / 2.0
    trace = []

    def objective(b):
        resid = R - Z @ b
        return np.mean(resid**2, axis=0) + lam * np.abs(b).sum(axis=0)

    if return_trace:
        trace.append(objective(beta))
    cols = [(j, gram[j, j], gram[:, j:j + 1]) for j in np.flatnonzero(live)]
    for sweep in range(max_sweeps):
        if sweep and sweep % polish_every == 0:
            exact = [_feature_sign(gram, corr[:, c], thresh, beta[:, c]) for c in range(beta.shape[1])]
            if all(e is not None for e in exact):
                beta = np.column_stack(exact)
                break
        max_change = 0.0
        for j, cjj, gcol in cols:
            old = beta[j]
            rho = corr[j] - Gb[j] + cjj * old
            new = np.sign(rho) * np.maximum(np.abs(rho) - thresh, 0.0) / cjj
            diff = new - old
            change = np.abs(diff).max()
            if change > 0:
                beta[j] = new
                Gb += gcol * diff
                if change > max_change:
                    max_change = change
        if return_trace:
            trace.append(objective(beta))
        if max_change <= tol * max(1.0, float(np.abs(beta).max())):
            break
    else:
        resid = float(np.linalg.norm(R - Z @ beta))
        raise ConvergenceError(
            f"lasso did not converge in {max_sweeps} sweeps (residual norm {resid:.3g})",
            residual_norm=resid,
        )
    alpha = np.zeros_like(beta)
    alpha[live] = beta[live] / scale[live, None]
    alpha = alpha[:, 0] if vector else alpha
    if return_trace:
        return alpha, np.array(trace)
    return alpha
