"""Versioned JSON checkpoints for networks.

Layout::

    {"format": "tda-checkpoint", "version": 1, "kind": "<class name>",
     "spec": {... dimensions, activations, extra attributes ...},
     "params": [flat parameter vector in layer-major order]}

Floats are written with ``repr`` precision so a round trip is exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT = "tda-checkpoint"
VERSION = 1

_REGISTRY = {}


def register(cls):
    _REGISTRY[cls.__name__] = cls
    return cls


def to_document(model):
    return {
        "format": FORMAT,
        "version": VERSION,
        "kind": type(model).__name__,
        "spec": model.to_dict(),
        "params": model.flat_params().tolist(),
    }


def from_document(doc):
    if doc.get("format") != FORMAT:
        raise ValueError("not a tda checkpoint")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    try:
        cls = _REGISTRY[doc["kind"]]
    except KeyError:
        raise ValueError(f"unknown model kind {doc.get('kind')!r}") from None
    return cls.from_dict(doc["spec"], np.asarray(doc["params"], dtype=np.float64))


def save_checkpoint(model, path):
    path = Path(path)
    path.write_text(json.dumps(to_document(model)))
    return path


def load_checkpoint(path):
    return from_document(json.loads(Path(path).read_text()))
