"""Named-tensor checkpoint format ("netdyn-params-v1")."""

from __future__ import annotations

import json

import numpy as np

from .errors import ArgumentError
from .tensor import Tensor

PARAMS_VERSION = "netdyn-params-v1"


def params_to_dict(named):
    tensors = {}
    for name, t in named.items():
        tensors[name] = {
            "shape": list(t.data.shape),
            "data": t.data.ravel().tolist(),
        }
    return tensors


def save_params(path, named, extra=None):
    doc = {"version": PARAMS_VERSION, "tensors": params_to_dict(named)}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_params(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != PARAMS_VERSION:
        raise ArgumentError(f"unexpected checkpoint version {doc.get('version')!r}")
    return doc


def restore_into(named, doc):
    """Copy checkpoint values into existing tensors, validating shapes."""
    stored = doc["tensors"]
    for name, t in named.items():
        if name not in stored:
            raise ArgumentError(f"checkpoint missing tensor {name!r}")
        entry = stored[name]
        shape = tuple(entry["shape"])
        if shape != t.data.shape:
            raise ArgumentError(f"tensor {name!r}: checkpoint shape {shape} != model {t.data.shape}")
        t.data[:] = np.asarray(entry["data"], dtype=np.float64).reshape(shape)


def count_params(named):
    return sum(t.data.size for t in named.values())
