"""Replication records and their summaries.

A record is a dict with keys ``replication``, ``method``, ``status``
(``"ok"`` or ``"failed"``), ``estimate``, ``ci_lower``, ``ci_upper``,
``truth``, ``converged``, ``wall_time`` and ``info``. Scalar tasks store
floats; survival stores one value per grid point (and ``times``).

Scalar summary: ``bias = mean(est - truth)``, ``variance`` is the sample
variance of the estimates (n - 1 divisor), ``mse = mean((est - truth)^2)``.
With a fixed truth these satisfy ``mse = bias^2 + (R - 1) / R * variance``
over R replications.

Survival summary: per grid point the same quantities; time-averaged
``mse`` and ``abs_bias`` are per-replication averages over the grid
(``mean_t (est - truth)^2`` and ``mean_t |est - truth|``), then averaged
over replications, with their across-replication standard deviations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SCALAR_METRICS = ("bias", "variance", "mse", "coverage", "ci_width", "n_ok", "n_failed", "converged")
CURVE_METRICS = ("mse", "mse_sd", "abs_bias", "abs_bias_sd", "variance", "coverage", "ci_width",
                 "n_ok", "n_failed", "converged")


@dataclass
class SummaryTable:
    task: str
    methods: list
    rows: dict = field(default_factory=dict)
    per_time: dict = field(default_factory=dict)
    times: list | None = None

    def value(self, method, metric):
        return self.rows[method][metric]

    def long_rows(self):
        """``(method, metric, time, value)`` tuples in a fixed order."""
        out = []
        for m in self.methods:
            for metric, v in self.rows[m].items():
                out.append((m, metric, None, v))
        for m in self.methods:
            for metric, series in self.per_time.get(m, {}).items():
                for t, v in zip(self.times, series):
                    out.append((m, metric, t, v))
        return out


def _ok(records, method):
    return [r for r in records if r["method"] == method and r["status"] == "ok"]


def _count_failed(records, method):
    return sum(1 for r in records if r["method"] == method and r["status"] != "ok")


def scalar_summary(records, method):
    ok = _ok(records, method)
    n_failed = _count_failed(records, method)
    row = dict.fromkeys(SCALAR_METRICS, float("nan"))
    row.update(n_ok=len(ok), n_failed=n_failed)
    if not ok:
        return row
    est = np.array([r["estimate"] for r in ok], dtype=np.float64)
    truth = np.array([r["truth"] for r in ok], dtype=np.float64)
    lo = np.array([r["ci_lower"] for r in ok], dtype=np.float64)
    hi = np.array([r["ci_upper"] for r in ok], dtype=np.float64)
    err = est - truth
    row.update(
        bias=float(err.mean()),
        variance=float(est.var(ddof=1)) if est.size > 1 else 0.0,
        mse=float(np.mean(err ** 2)),
        coverage=float(np.mean((lo <= truth) & (truth <= hi))),
        ci_width=float(np.mean(hi - lo)),
        converged=float(np.mean([bool(r.get("converged", True)) for r in ok])),
    )
    return row


def curve_summary(records, method):
    ok = _ok(records, method)
    n_failed = _count_failed(records, method)
    row = dict.fromkeys(CURVE_METRICS, float("nan"))
    row.update(n_ok=len(ok), n_failed=n_failed)
    if not ok:
        return row, {}
    est = np.array([r["estimate"] for r in ok], dtype=np.float64)
    truth = np.array([r["truth"] for r in ok], dtype=np.float64)
    lo = np.array([r["ci_lower"] for r in ok], dtype=np.float64)
    hi = np.array([r["ci_upper"] for r in ok], dtype=np.float64)
    err = est - truth
    per_rep_mse = np.mean(err ** 2, axis=1)
    per_rep_abs = np.mean(np.abs(err), axis=1)
    var_t = est.var(axis=0, ddof=1) if est.shape[0] > 1 else np.zeros(est.shape[1])
    hit = (lo <= truth) & (truth <= hi)
    row.update(
        mse=float(per_rep_mse.mean()),
        mse_sd=float(per_rep_mse.std(ddof=1)) if len(ok) > 1 else 0.0,
        abs_bias=float(per_rep_abs.mean()),
        abs_bias_sd=float(per_rep_abs.std(ddof=1)) if len(ok) > 1 else 0.0,
        variance=float(var_t.mean()),
        coverage=float(hit.mean()),
        ci_width=float(np.mean(hi - lo)),
        converged=float(np.mean([bool(r.get("converged", True)) for r in ok])),
    )
    per_time = {
        "bias": err.mean(axis=0).tolist(),
        "variance": var_t.tolist(),
        "mse": np.mean(err ** 2, axis=0).tolist(),
        "coverage": hit.mean(axis=0).tolist(),
        "ci_width": (hi - lo).mean(axis=0).tolist(),
    }
    return row, per_time


def summarize(records, task=None, methods=None):
    """Aggregate replication records into a :class:`SummaryTable`."""
    if not records:
        raise ValueError("no replication records to summarize")
    if task is None:
        task = "survival" if np.ndim(records[0].get("estimate")) else "ate"
    if methods is None:
        methods = list(dict.fromkeys(r["method"] for r in records))
    table = SummaryTable(task, list(methods))
    if task == "survival":
        for r in records:
            if r["status"] == "ok" and "times" in r:
                table.times = list(r["times"])
                break
        for m in methods:
            table.rows[m], table.per_time[m] = curve_summary(records, m)
    else:
        for m in methods:
            table.rows[m] = scalar_summary(records, m)
    return table


def bands(records, methods, times, truth, quantiles=(0.025, 0.5, 0.975)):
    """Per-time quantile curves across replications: ``{column: series}``."""
    out = {"time": list(times), "truth": list(truth)}
    for m in methods:
        ok = _ok(records, m)
        if not ok:
            continue
        est = np.array([r["estimate"] for r in ok], dtype=np.float64)
        for q, name in zip(quantiles, ("q025", "median", "q975")):
            out[f"{m}_{name}"] = np.quantile(est, q, axis=0).tolist()
    return out


def outperformance(records, target, competitors):
    """Fraction of replications where ``target`` is closer to the truth than each competitor.

    Works per grid point for curves and returns scalars for scalar tasks.
    Only replications where both methods succeeded count.
    """
    by_rep = {}
    for r in records:
        if r["status"] == "ok":
            by_rep.setdefault(r["replication"], {})[r["method"]] = r
    out = {}
    for c in competitors:
        wins = []
        for rep in sorted(by_rep):
            pair = by_rep[rep]
            if target in pair and c in pair:
                t = np.asarray(pair[target]["estimate"], dtype=np.float64)
                o = np.asarray(pair[c]["estimate"], dtype=np.float64)
                truth = np.asarray(pair[target]["truth"], dtype=np.float64)
                wins.append(np.abs(t - truth) < np.abs(o - truth))
        out[c] = np.mean(wins, axis=0).tolist() if wins else None
    return out
