"""Monte-Carlo benchmark driver.

Replication ``r`` of a run with seed ``s`` draws all of its randomness from
``np.random.default_rng(SeedSequence(s, spawn_key=(r,)))``, so replications
share no generator state and results do not depend on the worker count or
completion order. BLAS threads are pinned to one inside each replication.
A replication-level exception marks every method of that replication as
failed; a method-level exception marks only that method.
"""
from __future__ import annotations

import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from ..ate import aipw_ate, fit_dragonnet, plugin_ate, post_tmle, read_ate_csv
from ..ate.dragonnet import default_train_config, treg_predictions, treg_train
from ..ate.estimators import _estimate
from ..ate.targeted import tda_ate, tda_direct_ate
from ..nn import TrainConfig
from ..survival import (
    DgpParams,
    TimeGrid,
    calibrate_censoring,
    fit_censoring_model,
    fit_hazard,
    km_estimate,
    simulate_survival,
    survival_from_hazard,
    target_survival_curve,
    true_marginal_survival,
)
from ..survival.hazard import default_hazard_config
from ..targeting import TargetingConfig
from .ihdp import ihdp_synthesize
from .metrics import bands, outperformance, summarize

log = logging.getLogger(__name__)


def replication_rng(seed, rep):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))


def replication_seed(seed, rep):
    """Integer seed for code paths that take one (data split, generator draws)."""
    return int(np.random.SeedSequence(seed, spawn_key=(rep,)).generate_state(1)[0])


@dataclass
class BenchResult:
    config: object
    records: list
    summary: object
    bands: dict
    outperformance: dict
    context: dict


def _train_config(cfg, fallback):
    return TrainConfig(
        lr=cfg.lr,
        weight_decay=fallback.weight_decay if cfg.weight_decay is None else cfg.weight_decay,
        batch_size=cfg.batch_size or fallback.batch_size,
        max_epochs=cfg.max_epochs or fallback.max_epochs,
        patience=cfg.patience,
    )


def _targeting_config(cfg):
    return TargetingConfig(lam=cfg.lam_value, penalty=cfg.penalty_value, max_iters=cfg.tmax_value)


def _failed(rep, method, exc, truth=None):
    return {
        "replication": rep, "method": method, "status": "failed",
        "error": f"{type(exc).__name__}: {exc}", "truth": truth,
    }


# ---------------------------------------------------------------- ATE

def _ate_record(rep, est, truth, wall):
    info = {k: v for k, v in est.info.items() if isinstance(v, (int, float, str, bool))}
    return {
        "replication": rep, "method": est.method, "status": "ok",
        "estimate": est.psi, "ci_lower": est.ci_lower, "ci_upper": est.ci_upper,
        "truth": truth, "converged": bool(info.get("converged", True)),
        "wall_time": wall, "info": info,
    }


def ate_replication(cfg, rep, context=None):
    """All requested ATE estimators on one replication."""
    rng = replication_rng(cfg.seed, rep)
    rseed = replication_seed(cfg.seed, rep)
    if cfg.data_path:
        data = read_ate_csv(cfg.data_path).assign_split(rseed)
    else:
        data = ihdp_synthesize(rseed, n=cfg.n_samples)
    truth = data.true_ate
    tcfg = _train_config(cfg, default_train_config())
    hidden = cfg.hidden_value
    records = []
    shared = [m for m in cfg.methods if m != "TReg"]
    model = None
    if shared:
        try:
            model, _ = fit_dragonnet(data, tcfg, rng, hidden=hidden, standardize=cfg.standardize)
        except Exception as exc:
            records += [_failed(rep, m, exc, truth) for m in shared]
    for method in cfg.methods:
        if method != "TReg" and model is None:
            continue
        start = time.perf_counter()
        try:
            est = _run_ate_method(method, cfg, data, model, tcfg, rng, hidden)
        except Exception as exc:
            log.warning("replication %d method %s failed: %s", rep, method, exc)
            records.append(_failed(rep, method, exc, truth))
            continue
        records.append(_ate_record(rep, est, truth, time.perf_counter() - start))
    return records


def _run_ate_method(method, cfg, data, model, tcfg, rng, hidden):
    clip = cfg.clip
    if method == "Plugin":
        return plugin_ate(model, data, clip)
    if method == "AIPW":
        return aipw_ate(model, data, clip)
    if method == "PostTMLE":
        return post_tmle(model, data, clip)
    if method == "TReg":
        treg, eps, _ = treg_train(data, cfg.lambda_treg, tcfg, rng, hidden, clip, cfg.standardize)
        p = treg_predictions(treg, data.X, eps, clip)
        psi = np.mean(p.q1 - p.q0)
        return _estimate("TReg", psi, data.y, data.a, p.q0, p.q1, p.g, epsilon=float(eps))
    if method == "TdaLast":
        est, _, _ = tda_ate(model, data, cfg.partition, _targeting_config(cfg), clip, method="TdaLast")
        return est
    if method == "TdaFull":
        est, _, _ = tda_ate(model, data, "outcome-heads", _targeting_config(cfg), clip, method="TdaFull")
        return est
    if method == "TdaDirect":
        est, _, _ = tda_direct_ate(model, data, clip)
        return est
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------- survival

def survival_context(cfg):
    """Calibrated generator parameters, grid and ground-truth curve (shared by all replications)."""
    grid = TimeGrid.uniform(cfg.horizon, cfg.grid_points, cfg.n_substeps)
    params = DgpParams(center_exp=cfg.center_exp)
    params, frac = calibrate_censoring(params, cfg.censoring_target, cfg.calibration_n, seed=cfg.seed)
    truth = true_marginal_survival(grid.points, params, n=cfg.truth_n)
    return {"params": params, "censoring_fraction": frac, "grid": grid, "truth": truth}


def _curve_record(rep, method, est, lo, hi, truth, times, wall, converged=True, info=None):
    return {
        "replication": rep, "method": method, "status": "ok",
        "estimate": np.asarray(est).tolist(), "ci_lower": np.asarray(lo).tolist(),
        "ci_upper": np.asarray(hi).tolist(), "truth": np.asarray(truth).tolist(),
        "times": np.asarray(times).tolist(), "converged": bool(converged),
        "wall_time": wall, "info": info or {},
    }


def survival_replication(cfg, rep, context):
    rng = replication_rng(cfg.seed, rep)
    params, grid, truth = context["params"], context["grid"], context["truth"]
    times = grid.points
    data = simulate_survival(cfg.n_samples, params, rng)
    tr, va = data.split(replication_seed(cfg.seed, rep))
    hcfg = _train_config(cfg, default_hazard_config())
    hidden = tuple(np.atleast_1d(cfg.hidden_value).tolist())
    records = []
    if "KM" in cfg.methods:
        start = time.perf_counter()
        km = km_estimate(data.t_obs, data.delta, times)
        lo, hi = km.ci()
        records.append(_curve_record(rep, "KM", km.survival, lo, hi, truth, times,
                                     time.perf_counter() - start, info={"degenerate": km.degenerate}))
    needs_net = [m for m in cfg.methods if m != "KM"]
    if not needs_net:
        return records
    start = time.perf_counter()
    try:
        net, hres = fit_hazard(data.X, data.t_obs, data.delta, tr, va, grid, rng, hcfg, hidden, cfg.dropout)
        cnet, _ = fit_censoring_model(data.X, data.t_obs, data.delta, tr, va, grid, rng, hcfg, hidden,
                                      cfg.dropout)
        G_hat = survival_from_hazard(cnet, data.X, grid)
        out = target_survival_curve(net, data.X, data.t_obs, data.delta, G_hat, grid,
                                    _targeting_config(cfg), cfg.g_min)
    except Exception as exc:
        log.warning("replication %d survival pipeline failed: %s", rep, exc)
        return records + [_failed(rep, m, exc, truth.tolist()) for m in needs_net]
    wall = time.perf_counter() - start
    info = {"reason": out.report.reason, "iterations": out.report.n_updates,
            "n_floored": out.n_floored, "censored_fraction": data.censored_fraction,
            "epochs": len(hres.history)}
    if "Initial" in cfg.methods:
        lo, hi = out.ci("initial")
        records.append(_curve_record(rep, "Initial", out.initial, lo, hi, truth, times, wall, info=info))
    if "TDA" in cfg.methods:
        lo, hi = out.ci("targeted")
        records.append(_curve_record(rep, "TDA", out.targeted, lo, hi, truth, times, wall,
                                     out.report.converged, info))
    return records


# ---------------------------------------------------------------- driver

def _run_one(args):
    cfg, rep, context = args
    runner = ate_replication if cfg.task == "ate" else survival_replication
    with threadpool_limits(limits=1):
        try:
            return runner(cfg, rep, context)
        except Exception as exc:
            log.error("replication %d failed:\n%s", rep, traceback.format_exc())
            truth = None if context is None else np.asarray(context["truth"]).tolist()
            return [_failed(rep, m, exc, truth) for m in cfg.methods]


def run_replications(cfg, context=None, progress=None):
    jobs = [(cfg, rep, context) for rep in range(cfg.replications)]
    records = []
    if cfg.workers == 1:
        for job in jobs:
            recs = _run_one(job)
            records += recs
            if progress:
                progress(job[1], recs)
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for job, recs in zip(jobs, pool.map(_run_one, jobs)):
                records += recs
                if progress:
                    progress(job[1], recs)
    order = {m: i for i, m in enumerate(cfg.methods)}
    records.sort(key=lambda r: (r["replication"], order.get(r["method"], len(order))))
    return records


def _progress_logger(rep, recs):
    parts = []
    for r in recs:
        if r["status"] != "ok":
            parts.append(f"{r['method']}=FAILED")
        elif np.ndim(r["estimate"]):
            err = np.mean((np.asarray(r["estimate"]) - np.asarray(r["truth"])) ** 2)
            parts.append(f"{r['method']} mse={err:.5f}")
        else:
            parts.append(f"{r['method']}={r['estimate']:.3f}")
    log.info("replication %d: %s", rep, " ".join(parts))


def run_ate_bench(cfg, progress=_progress_logger):
    if cfg.task != "ate":
        raise ValueError("run_ate_bench needs task='ate'")
    records = run_replications(cfg, None, progress)
    return finish(cfg, records, {})


def run_survival_bench(cfg, context=None, progress=_progress_logger):
    if cfg.task != "survival":
        raise ValueError("run_survival_bench needs task='survival'")
    context = context or survival_context(cfg)
    records = run_replications(cfg, context, progress)
    return finish(cfg, records, context)


def run_bench(cfg, progress=_progress_logger):
    return run_ate_bench(cfg, progress) if cfg.task == "ate" else run_survival_bench(cfg, progress=progress)


def reference_method(cfg):
    """Method whose errors are compared against the others in ``outperformance``."""
    for m in ("TDA", "TdaLast", "TdaFull", "TdaDirect"):
        if m in cfg.methods:
            return m
    return cfg.methods[0]


def finish(cfg, records, context):
    summary = summarize(records, cfg.task, cfg.methods)
    ref = reference_method(cfg)
    others = [m for m in cfg.methods if m != ref]
    if cfg.task == "survival":
        band = bands(records, cfg.methods, context["grid"].points, context["truth"])
    else:
        truth = [r["truth"] for r in records if r.get("truth") is not None]
        band = {"method": [], "truth": [], "q025": [], "median": [], "q975": []}
        for m in cfg.methods:
            est = [r["estimate"] for r in records if r["method"] == m and r["status"] == "ok"]
            if est:
                q = np.quantile(est, (0.025, 0.5, 0.975))
                band["method"].append(m)
                band["truth"].append(float(np.mean(truth)))
                for name, v in zip(("q025", "median", "q975"), q):
                    band[name].append(float(v))
    outp = {"target": ref, "fractions": outperformance(records, ref, others)}
    return BenchResult(cfg, records, summary, band, outp, context)
