"""JSON checkpoint manifest: name, shape and base64 little-endian float32 payload per tensor."""

from __future__ import annotations

import base64
import json
from collections import OrderedDict
from pathlib import Path
from typing import Mapping

import numpy as np

FORMAT = "coverap-checkpoint/1"


def encode_array(a: np.ndarray) -> dict:
    le = np.ascontiguousarray(a, dtype="<f4")
    return {"shape": list(a.shape), "dtype": "float32-le",
            "data": base64.b64encode(le.tobytes()).decode("ascii")}


def decode_array(entry: Mapping) -> np.ndarray:
    if entry.get("dtype") != "float32-le":
        raise ValueError(f"unsupported dtype {entry.get('dtype')!r}")
    raw = base64.b64decode(entry["data"])
    shape = tuple(int(s) for s in entry["shape"])
    arr = np.frombuffer(raw, dtype="<f4")
    if arr.size != int(np.prod(shape)):
        raise ValueError("payload length does not match shape")
    return arr.reshape(shape).astype(np.float32)


def dumps(state: Mapping[str, np.ndarray], meta: Mapping | None = None) -> str:
    doc = {"format": FORMAT, "meta": dict(meta or {}),
           "tensors": [{"name": k, **encode_array(v)} for k, v in state.items()]}
    return json.dumps(doc, indent=1, sort_keys=False)


def loads(text: str) -> tuple:
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise ValueError("not a checkpoint manifest")
    state = OrderedDict((t["name"], decode_array(t)) for t in doc["tensors"])
    return state, doc.get("meta", {})


def save(path, state, meta=None) -> None:
    Path(path).write_text(dumps(state, meta))


def load(path) -> tuple:
    return loads(Path(path).read_text())
