"""Monte-Carlo benchmarks: data provisioning, replication driver, metrics, result files."""
from .bench import (
    BenchResult,
    ate_replication,
    replication_rng,
    run_ate_bench,
    run_bench,
    run_survival_bench,
    survival_context,
    survival_replication,
)
from .config import ATE_METHODS, SURVIVAL_METHODS, BenchConfig, read_config, write_config
from .ihdp import IhdpConfig, ihdp_load, ihdp_synthesize
from .metrics import SummaryTable, bands, outperformance, summarize
from .persist import load_summary, persist, read_records, write_manifest

__all__ = [
    "ATE_METHODS", "BenchConfig", "BenchResult", "IhdpConfig", "SURVIVAL_METHODS",
    "SummaryTable", "ate_replication", "bands", "ihdp_load", "ihdp_synthesize",
    "load_summary", "outperformance", "persist", "read_config", "read_records",
    "replication_rng", "run_ate_bench", "run_bench", "run_survival_bench",
    "summarize", "survival_context", "survival_replication", "write_config",
    "write_manifest",
]
