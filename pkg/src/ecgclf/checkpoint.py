"""Versioned binary checkpoints: JSON header plus raw float32 blocks.

Layout: 8-byte magic, uint32 header length, UTF-8 JSON header, then the
named arrays in header order as little-endian float32. Round-trips are
bit-exact because training math is float32 throughout.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import MalformedFile
from .network import Model, ModelConfig, build

MAGIC = b"ECGCKP01"
_LEN = struct.Struct("<I")
FORMAT_VERSION = 1


def config_hash(config: ModelConfig) -> str:
    blob = json.dumps(asdict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(model: Model, path) -> None:
    arrays = model.state_arrays()
    header = {
        "format_version": FORMAT_VERSION,
        "arch": model.config.arch,
        "aggregator": model.aggregator,
        "config": asdict(model.config),
        "config_hash": config_hash(model.config),
        "blocks": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_LEN.pack(len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> Model:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise MalformedFile(f"{path}: not a checkpoint file")
    off = len(MAGIC)
    (hlen,) = _LEN.unpack_from(raw, off)
    off += _LEN.size
    try:
        header = json.loads(raw[off : off + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFile(f"{path}: bad checkpoint header") from exc
    off += hlen
    config = ModelConfig(**header["config"])
    if header.get("config_hash") != config_hash(config):
        raise MalformedFile(f"{path}: config hash mismatch")
    model = build(config, seed=0, aggregator=header["aggregator"])
    snap = {}
    for block in header["blocks"]:
        shape = tuple(block["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(shape)
        off += 4 * count
        snap[block["name"]] = arr.astype(np.float32)
    expected = set(model.state_arrays())
    if set(snap) != expected:
        raise MalformedFile(f"{path}: parameter blocks do not match architecture")
    model.restore(snap)
    return model
