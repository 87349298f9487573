"""Result files.

``summary.csv``
    ``task, method, metric, time, value``; ``time`` is empty for aggregate
    rows and holds the grid time for per-time survival rows.
``replications.jsonl``
    One replication record per line (see :mod:`tda.harness.metrics`).
``bands.csv``
    Survival: one row per grid time with ``time, truth`` and
    ``<method>_q025, <method>_median, <method>_q975``. ATE: one row per
    method with ``method, truth, q025, median, q975``.
``outperformance.csv``
    Fraction of replications where the reference method (``target``) has
    the smaller absolute error: survival rows ``time, <competitor>...``;
    ATE rows ``competitor, fraction``.
``manifest.json``
    Config echo, seed, package version, source hash and, when run from the
    CLI, where each setting came from. Written before any replication runs.
"""
from __future__ import annotations

import csv
import hashlib
import json
import platform
import subprocess
from pathlib import Path

import numpy as np

from .. import __version__
from .metrics import summarize

FILES = ("summary.csv", "replications.jsonl", "bands.csv", "outperformance.csv", "manifest.json")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def source_hash():
    """Git-style SHA-1 over the package sources (path and content of every .py file)."""
    root = Path(__file__).resolve().parents[1]
    h = hashlib.sha1()
    for path in sorted(root.rglob("*.py")):
        data = path.read_bytes()
        h.update(str(path.relative_to(root)).encode())
        h.update(b"blob %d\0" % len(data))
        h.update(data)
    return h.hexdigest()


def _git_commit():
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None


def write_manifest(cfg, out_dir, provenance=None, extra=None):
    out = _ensure_dir(out_dir)
    doc = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "version": __version__,
        "source_hash": source_hash(),
        "git_commit": _git_commit(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seed_rule": "default_rng(SeedSequence(seed, spawn_key=(replication,)))",
    }
    if provenance is not None:
        doc["provenance"] = provenance
    if extra:
        doc.update(extra)
    path = out / "manifest.json"
    _write(path, json.dumps(doc, indent=2, default=_json_default))
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return str(obj)


def _ensure_dir(out_dir):
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _write_csv(path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_summary(summary, path):
    rows = [(summary.task, m, metric, t, v) for m, metric, t, v in summary.long_rows()]
    _write_csv(path, ["task", "method", "metric", "time", "value"], rows)


def write_records(records, path):
    lines = [json.dumps(r, sort_keys=True, default=_json_default) for r in records]
    _write(path, "\n".join(lines) + ("\n" if lines else ""))


def read_records(path):
    try:
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


def write_bands(band, path):
    keys = list(band)
    rows = zip(*(band[k] for k in keys))
    _write_csv(path, keys, rows)


def write_outperformance(outp, path, times=None):
    fr = {k: v for k, v in outp["fractions"].items() if v is not None}
    if times is not None:
        comps = list(fr)
        rows = [(t, *(fr[c][i] for c in comps)) for i, t in enumerate(times)]
        _write_csv(path, ["time", *comps], rows)
    else:
        _write_csv(path, ["target", "competitor", "fraction"], [(outp["target"], c, v) for c, v in fr.items()])


def persist(result, out_dir, provenance=None):
    """Write the five result files; the manifest is refreshed with run context."""
    out = _ensure_dir(out_dir)
    cfg = result.config
    extra = {"n_records": len(result.records),
             "n_failed": sum(1 for r in result.records if r["status"] != "ok")}
    ctx = result.context
    if ctx:
        extra["survival"] = {"dgp": ctx["params"].to_dict(),
                             "censoring_fraction": ctx["censoring_fraction"],
                             "truth": np.asarray(ctx["truth"]).tolist()}
    write_manifest(cfg, out, provenance, extra)
    write_summary(result.summary, out / "summary.csv")
    write_records(result.records, out / "replications.jsonl")
    write_bands(result.bands, out / "bands.csv")
    times = result.summary.times if cfg.task == "survival" else None
    write_outperformance(result.outperformance, out / "outperformance.csv", times)
    return {name: out / name for name in FILES}


def load_summary(out_dir, task=None, methods=None):
    """Recompute the summary from stored replication records."""
    records = read_records(Path(out_dir) / "replications.jsonl")
    return summarize(records, task, methods)
