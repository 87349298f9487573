"""Benchmark configuration and its flat INI representation.

A config file has sections ``[bench]``, ``[targeting]``, ``[network]`` and
``[survival]``; every key maps to one :class:`BenchConfig` field. Values
are Python literals (``0.01``, ``"l2"``, ``("Plugin", "TdaLast")``);
unquoted words are read as strings and comma-separated words as tuples.
"""
from __future__ import annotations

import ast
import configparser
from dataclasses import asdict, dataclass, fields, replace

ATE_METHODS = ("Plugin", "TReg", "AIPW", "PostTMLE", "TdaLast", "TdaFull", "TdaDirect")
SURVIVAL_METHODS = ("Initial", "KM", "TDA")
TASKS = ("ate", "survival")

SECTIONS = {
    "bench": ("task", "replications", "n", "methods", "seed", "out", "workers", "data_path"),
    "targeting": ("lam", "penalty", "tmax", "partition", "clip", "lambda_treg", "g_min"),
    "network": ("hidden", "lr", "batch_size", "max_epochs", "patience", "weight_decay",
                "dropout", "standardize"),
    "survival": ("center_exp", "censoring_target", "calibration_n", "truth_n", "grid_points",
                 "horizon", "n_substeps"),
}


@dataclass(frozen=True)
class BenchConfig:
    task: str = "ate"
    replications: int = 100
    n: int | None = None
    methods: tuple = ()
    seed: int = 0
    out: str = "results"
    workers: int = 1
    data_path: str | None = None
    # targeting
    lam: float | None = None
    penalty: str | None = None
    tmax: int | None = None
    partition: str = "last-layer"
    clip: float = 0.01
    lambda_treg: float = 0.01
    g_min: float = 0.05
    # network / training
    hidden: object = None
    lr: float = 1e-3
    batch_size: int | None = None
    max_epochs: int | None = None
    patience: int = 10
    weight_decay: float | None = None
    dropout: float = 0.2
    standardize: bool = False
    # survival simulation
    center_exp: bool = True
    censoring_target: float = 0.30
    calibration_n: int = 100_000
    truth_n: int = 200_000
    grid_points: int = 50
    horizon: float = 16.0
    n_substeps: int = 200

    def __post_init__(self):
        task = str(self.task).lower()
        if task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        object.__setattr__(self, "task", task)
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        methods = self.methods
        if isinstance(methods, str):
            methods = tuple(m.strip() for m in methods.split(",") if m.strip())
        methods = tuple(methods) or self.known_methods
        unknown = [m for m in methods if m not in self.known_methods]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {self.known_methods}")
        object.__setattr__(self, "methods", methods)
        if self.penalty is not None and self.penalty.lower() not in ("l1", "l2"):
            raise ValueError("penalty must be 'l1' or 'l2'")

    @property
    def known_methods(self):
        return ATE_METHODS if self.task == "ate" else SURVIVAL_METHODS

    # task-dependent defaults
    @property
    def n_samples(self):
        return self.n or (747 if self.task == "ate" else 1000)

    @property
    def lam_value(self):
        return self.lam if self.lam is not None else (0.01 if self.task == "ate" else 1e-5)

    @property
    def penalty_value(self):
        return (self.penalty or ("l2" if self.task == "ate" else "l1")).lower()

    @property
    def tmax_value(self):
        return self.tmax or (100 if self.task == "ate" else 200)

    @property
    def hidden_value(self):
        if self.hidden is not None:
            return self.hidden
        return 64 if self.task == "ate" else (64, 32, 16)

    def to_dict(self):
        return asdict(self)

    def with_(self, **kw):
        return replace(self, **kw)


def _literal(text):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        pass
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null", ""):
        return None
    if "," in text:
        return tuple(t.strip() for t in text.split(",") if t.strip())
    return text


def read_config(path):
    """Key-value pairs from an INI file, validated against the known keys."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    with open(path) as fh:
        parser.read_file(fh)
    known = {f.name for f in fields(BenchConfig)}
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ValueError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in known or key not in SECTIONS[section]:
                raise ValueError(f"{path}: unknown key {key!r} in [{section}]")
            values[key] = _literal(raw)
    return values


def write_config(cfg, path):
    parser = configparser.ConfigParser()
    parser.optionxform = str
    doc = cfg.to_dict()
    for section, keys in SECTIONS.items():
        parser[section] = {k: repr(doc[k]) for k in keys}
    with open(path, "w") as fh:
        parser.write(fh)
    return path
