"""Single-file model checkpoints.

Layout: 8-byte magic, uint32 format version, uint32 header length, a UTF-8 JSON
header (network spec, parameter names and shapes, training config), then the
parameters as little-endian float32 and the normalization statistics as
little-endian float64, both in header order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..frames import FormatError
from .data import NormStats
from .layers import Parameter
from .model import FusionModel, NetworkSpec

MAGIC = b"GLMODEL\x00"
VERSION = 1


def to_bytes(model: FusionModel) -> bytes:
    names = list(model.params)
    norm = model.norm
    norm_keys = norm.names() if norm is not None else []
    header = {
        "spec": model.spec.to_json(),
        "params": [[k, list(model.params[k].shape)] for k in names],
        "norm": [[k, len(norm.mean[k])] for k in norm_keys],
        "config": model.config,
        "seed": model.seed,
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(hbytes)), hbytes]
    parts += [model.params[k].value.astype("<f4").tobytes() for k in names]
    for k in norm_keys:
        parts.append(np.asarray(norm.mean[k], dtype="<f8").tobytes())
        parts.append(np.asarray(norm.std[k], dtype="<f8").tobytes())
    return b"".join(parts)


def from_bytes(buf: bytes, source: str = "<bytes>") -> FusionModel:
    if buf[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{source}: not a model checkpoint")
    off = len(MAGIC)
    version, hlen = struct.unpack_from("<II", buf, off)
    if version != VERSION:
        raise FormatError(f"{source}: unsupported checkpoint version {version}")
    off += 8
    try:
        header = json.loads(buf[off:off + hlen])
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise FormatError(f"{source}: corrupt header ({e})") from None
    off += hlen

    def take(count, dtype):
        nonlocal off
        size = count * np.dtype(dtype).itemsize
        if off + size > len(buf):
            raise FormatError(f"{source}: truncated checkpoint")
        arr = np.frombuffer(buf, dtype=dtype, count=count, offset=off)
        off += size
        return arr

    params = {}
    for name, shape in header["params"]:
        params[name] = Parameter(take(int(np.prod(shape)), "<f4").reshape(shape).astype(np.float32))
    norm = None
    if header["norm"]:
        mean, std = {}, {}
        for name, n in header["norm"]:
            mean[name] = take(n, "<f8").astype(np.float64)
            std[name] = take(n, "<f8").astype(np.float64)
        norm = NormStats(mean, std)
    if off != len(buf):
        raise FormatError(f"{source}: {len(buf) - off} trailing bytes")
    return FusionModel(NetworkSpec.from_json(header["spec"]), params, norm, header["config"], header["seed"])


def save(model: FusionModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(model))
    return path


def load(path) -> FusionModel:
    path = Path(path)
    return from_bytes(path.read_bytes(), str(path))
