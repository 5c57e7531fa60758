"""JSON process files: factors, kind ("matrix" or "pure"), row-major [re, im] data."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FactorError, FileFormatError
from .linalg import FactorLabel, LabeledOperator, PureProcess


def to_dict(x: LabeledOperator | PureProcess) -> dict:
    kind = "pure" if isinstance(x, PureProcess) else "matrix"
    flat = np.asarray(x.data).reshape(-1)
    return {
        "kind": kind,
        "factors": [{"name": f.name, "dim": f.dim, "role": f.role.value} for f in x.factors],
        "data": [[float(z.real), float(z.imag)] for z in flat],
    }


def from_dict(obj: dict) -> LabeledOperator | PureProcess:
    try:
        kind = obj["kind"]
        fs = tuple(FactorLabel(f["name"], int(f["dim"]), f.get("role")) for f in obj["factors"])
        data = np.array(obj["data"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"malformed process file: {exc}") from None
    if data.ndim != 2 or data.shape[1:] != (2,):
        raise FileFormatError("data must be a list of [re, im] pairs")
    z = data[:, 0] + 1j * data[:, 1]
    D = int(np.prod([f.dim for f in fs], dtype=np.int64))
    try:
        if kind == "pure":
            if z.size != D:
                raise FileFormatError(f"pure data has {z.size} entries, expected {D}")
            return PureProcess(fs, z)
        if kind == "matrix":
            if z.size != D * D:
                raise FileFormatError(f"matrix data has {z.size} entries, expected {D * D}")
            return LabeledOperator(fs, z.reshape(D, D))
    except FactorError as exc:
        raise FileFormatError(str(exc)) from None
    raise FileFormatError(f"unknown kind {kind!r}")


def dumps(x: LabeledOperator | PureProcess) -> str:
    return json.dumps(to_dict(x), sort_keys=True) + "\n"


def loads(text: str) -> LabeledOperator | PureProcess:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise FileFormatError("process file must hold a JSON object")
    return from_dict(obj)


def write_process(path, x: LabeledOperator | PureProcess) -> None:
    Path(path).write_text(dumps(x))


def read_process(path) -> LabeledOperator | PureProcess:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text)
