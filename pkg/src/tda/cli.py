"""Command-line interface.

    tda ate-bench       --config c.ini --replications 5 --seed 1 --out results/
    tda survival-bench  --config c.ini --replications 50 --workers 4
    tda target          --model m.ckpt --data d.csv --partition last-layer --lambda 0.01
    tda simulate        --task ate --n 747 --seed 3 --out d.csv --fit-model m.ckpt
    tda report          --out results/

Exit status: 0 on success, 2 for usage or input errors, 1 for runtime failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .exceptions import SchemaError
from .harness import BenchConfig, persist, read_config, run_bench, write_manifest
from .harness.config import ATE_METHODS, SURVIVAL_METHODS
from .harness.persist import load_summary, write_summary

log = logging.getLogger("tda")

PARTITION_HELP = "last-layer, outcome-heads, blocks:<layer>,<layer>,... or auto-plateau"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p, bench=True):
    p.add_argument("--config", help="INI config file ([bench], [targeting], [network], [survival])")
    p.add_argument("--seed", type=int, help="base seed (default: config, then $TDA_SEED, then 0)")
    p.add_argument("--lambda", dest="lam", type=float, help="projection penalty strength")
    p.add_argument("--penalty", choices=("l1", "l2"), help="projection penalty kind")
    p.add_argument("--tmax", type=int, help="maximum targeting iterations")
    p.add_argument("--partition", help=f"targeted parameters: {PARTITION_HELP}")
    p.add_argument("--out", help="output directory (bench, report) or file (target, simulate)")
    if bench:
        p.add_argument("--replications", type=int, help="number of Monte-Carlo replications")
        p.add_argument("--n", type=int, help="sample size per replication")
        p.add_argument("--methods", help="comma-separated estimators")
        p.add_argument("--workers", type=int, help="parallel worker processes")


def build_parser():
    parser = _Parser(prog="tda", description="Targeted deep architectures: benchmarks and targeting.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    p = sub.add_parser("ate-bench", help="ATE Monte-Carlo benchmark",
                       description=f"Methods: {', '.join(ATE_METHODS)}.")
    _common(p)
    p = sub.add_parser("survival-bench", help="survival-curve Monte-Carlo benchmark",
                       description=f"Methods: {', '.join(SURVIVAL_METHODS)}.")
    _common(p)
    p = sub.add_parser("target", help="target a checkpointed model on a dataset",
                       description="DragonNet checkpoints take an ATE CSV; HazardNet checkpoints a survival CSV "
                                   "(a censoring model is fitted first).")
    _common(p, bench=False)
    p.add_argument("--model", required=True, help="model checkpoint (JSON)")
    p.add_argument("--data", required=True, help="dataset CSV")
    p = sub.add_parser("simulate", help="write a simulated dataset CSV")
    _common(p, bench=False)
    p.add_argument("--task", choices=("ate", "survival"), default="ate", help="which generator")
    p.add_argument("--n", type=int, help="sample size")
    p.add_argument("--fit-model", help="also train the matching network and save its checkpoint here")
    p = sub.add_parser("report", help="re-summarize stored replication records")
    p.add_argument("--out", required=True, help="directory holding replications.jsonl")
    return parser


FLAG_FIELDS = {"replications": "replications", "seed": "seed", "n": "n", "methods": "methods",
               "lam": "lam", "penalty": "penalty", "tmax": "tmax", "partition": "partition",
               "workers": "workers", "out": "out"}


def resolve_config(args, task):
    """Merge defaults, config file, ``TDA_SEED`` and flags; returns ``(cfg, provenance)``."""
    values, prov = {"task": task}, {"task": "command"}
    if args.config:
        try:
            file_values = read_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror or exc}") from None
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        file_values.pop("task", None)
        values.update(file_values)
        prov.update(dict.fromkeys(file_values, "file"))
    if "seed" not in values and os.environ.get("TDA_SEED"):
        try:
            values["seed"] = int(os.environ["TDA_SEED"])
        except ValueError:
            raise UsageError("TDA_SEED must be an integer") from None
        prov["seed"] = "env"
    for flag, field in FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[field] = v
            prov[field] = "flag"
    try:
        cfg = BenchConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    return cfg, prov


def cmd_bench(args, task):
    if not args.config:
        raise UsageError(f"tda {args.command}: --config is required")
    cfg, prov = resolve_config(args, task)
    write_manifest(cfg, cfg.out, prov)
    result = run_bench(cfg)
    paths = persist(result, cfg.out, prov)
    _print_summary(result.summary)
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return 0


def _print_summary(summary):
    for m in summary.methods:
        row = summary.rows[m]
        cells = " ".join(f"{k}={_short(v)}" for k, v in row.items())
        print(f"{m:10s} {cells}")


def _short(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def cmd_report(args):
    out = Path(args.out)
    if not (out / "replications.jsonl").exists():
        raise UsageError(f"no replications.jsonl in {out}")
    manifest = out / "manifest.json"
    task = methods = None
    if manifest.exists():
        cfg = json.loads(manifest.read_text()).get("config", {})
        task, methods = cfg.get("task"), cfg.get("methods")
    summary = load_summary(out, task, methods)
    write_summary(summary, out / "summary.csv")
    _print_summary(summary)
    return 0


def _seed(args):
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("TDA_SEED", 0))


def cmd_simulate(args):
    from .ate import fit_dragonnet, write_ate_csv
    from .harness import ihdp_synthesize
    from .nn import save_checkpoint
    from .survival import DgpParams, calibrate_censoring, fit_hazard, simulate_survival, write_survival_csv

    if not args.out:
        raise UsageError("tda simulate: --out is required")
    seed = _seed(args)
    rng = np.random.default_rng(seed)
    if args.task == "ate":
        data = ihdp_synthesize(seed, n=args.n or 747)
        write_ate_csv(data, args.out)
        if args.fit_model:
            model, _ = fit_dragonnet(data, rng=rng)
            save_checkpoint(model, args.fit_model)
    else:
        params, _ = calibrate_censoring(DgpParams(center_exp=True), seed=seed)
        data = simulate_survival(args.n or 1000, params, rng)
        write_survival_csv(data, args.out, params, {"seed": seed})
        if args.fit_model:
            tr, va = data.split(seed)
            net, _ = fit_hazard(data.X, data.t_obs, data.delta, tr, va, rng=rng)
            save_checkpoint(net, args.fit_model)
    print(args.out)
    return 0


def cmd_target(args):
    from .nn import load_checkpoint

    try:
        model = load_checkpoint(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load model {args.model}: {exc}") from None
    kind = type(model).__name__
    if kind == "DragonNet":
        report = _target_ate(args, model)
    elif kind == "HazardNet":
        report = _target_survival(args, model)
    else:
        raise UsageError(f"cannot target a {kind} checkpoint")
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def _file_settings(args):
    """``[targeting]`` values from ``--config`` that no flag overrides."""
    if not args.config:
        return {}
    try:
        values = read_config(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return {k: values[k] for k in ("lam", "penalty", "tmax", "partition") if k in values}


def _targeting_cfg(args, lam, penalty, tmax):
    from .targeting import TargetingConfig

    file = _file_settings(args)
    pick = lambda flag, key, default: flag if flag is not None else file.get(key, default)  # noqa: E731
    return TargetingConfig(
        lam=pick(args.lam, "lam", lam),
        penalty=pick(args.penalty, "penalty", penalty),
        max_iters=pick(args.tmax, "tmax", tmax),
    )


def _target_ate(args, model):
    from .ate import read_ate_csv
    from .ate.targeted import tda_ate, tda_auto_plateau

    try:
        data = read_ate_csv(args.data)
    except SchemaError as exc:
        raise UsageError(str(exc)) from None
    cfg = _targeting_cfg(args, 0.01, "l2", 100)
    partition = args.partition or _file_settings(args).get("partition", "last-layer")
    extra = {}
    if partition == "auto-plateau":
        est, report, _, extra = tda_auto_plateau(model, data, cfg)
    else:
        try:
            est, report, _ = tda_ate(model, data, partition, cfg)
        except ValueError as exc:
            if "partition" in str(exc) or "block" in str(exc):
                raise UsageError(str(exc)) from None
            raise
    doc = report.to_dict()
    doc.update(partition=partition, psi=est.psi, ci_lower=est.ci_lower, ci_upper=est.ci_upper,
               n_iterations=report.n_updates, selection=extra or None)
    return doc


def _target_survival(args, model):
    from .survival import fit_censoring_model, read_survival_csv, survival_from_hazard, target_survival_curve

    if args.partition not in (None, "last-layer"):
        raise UsageError("survival targeting supports --partition last-layer only")
    try:
        data = read_survival_csv(args.data)
    except SchemaError as exc:
        raise UsageError(str(exc)) from None
    seed = _seed(args)
    tr, va = data.split(seed)
    cnet, _ = fit_censoring_model(data.X, data.t_obs, data.delta, tr, va, rng=seed)
    G_hat = survival_from_hazard(cnet, data.X)
    cfg = _targeting_cfg(args, 1e-5, "l1", 200)
    out = target_survival_curve(model, data.X, data.t_obs, data.delta, G_hat, cfg=cfg)
    lo, hi = out.ci("targeted")
    doc = out.report.to_dict()
    doc.update(partition="last-layer", initial=out.initial.tolist(), ci_lower=lo.tolist(),
               ci_upper=hi.tolist(), n_iterations=out.report.n_updates, n_floored=out.n_floored)
    return doc


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        print(parser.format_usage().strip(), file=sys.stderr)
        return 2
    except SystemExit as exc:
        # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("ate-bench", "survival-bench"):
            return cmd_bench(args, "ate" if args.command == "ate-bench" else "survival")
        if args.command == "report":
            return cmd_report(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        return cmd_target(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
