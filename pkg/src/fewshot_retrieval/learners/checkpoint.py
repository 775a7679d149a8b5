"""Checkpoints: magic, JSON header length, JSON header, then float64 parameters in layer order."""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .mlp import MlpParams

MAGIC = b"RFCK"
_PREFIX = struct.Struct("<4sI")


def save_checkpoint(params: MlpParams, path: str | os.PathLike, header: dict) -> None:
    meta = dict(header)
    meta["shapes"] = [list(a.shape) for a in params.arrays()]
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, len(blob)))
        fh.write(blob)
        fh.write(params.flat().astype("<f8").tobytes())


def load_checkpoint(path: str | os.PathLike) -> tuple[MlpParams, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise DataError(f"{path}: truncated checkpoint")
    magic, n = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad checkpoint magic {magic!r}")
    try:
        meta = json.loads(raw[_PREFIX.size : _PREFIX.size + n])
        shapes = [tuple(s) for s in meta.pop("shapes")]
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: unreadable checkpoint header") from exc
    blob = raw[_PREFIX.size + n :]
    if len(blob) != 8 * sum(int(np.prod(s)) for s in shapes):
        raise DataError(f"{path}: parameter blob size disagrees with header")
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    arrays, pos = [], 0
    for s in shapes:
        size = int(np.prod(s))
        arrays.append(flat[pos : pos + size].reshape(s).copy())
        pos += size
    return MlpParams(arrays[0::2], arrays[1::2]), meta
