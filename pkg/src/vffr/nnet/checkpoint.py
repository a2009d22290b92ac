"""Versioned binary checkpoint container.

Layout (little-endian)::

    b"VFFRCKPT" | uint32 version | uint64 header_len | JSON header | tensor blobs

The JSON header carries the variant tag, the network config, the Adam
hyper-parameters and step counter, the RNG state and a table of
``name -> (offset, shape)`` for the '<f8' blobs that follow it.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from vffr.nnet.model import NetConfig, PointNetRegressor
from vffr.nnet.optim import Adam

MAGIC = b"VFFRCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: PointNetRegressor, optimizer: Adam | None = None,
                    rng_state=None, extra=None) -> None:
    blobs = []
    table = {}
    offset = 0

    def put(key, arr):
        nonlocal offset
        a = np.ascontiguousarray(arr, dtype="<f8")
        table[key] = {"offset": offset, "shape": list(a.shape)}
        blobs.append(a.tobytes())
        offset += a.nbytes

    for name, p in model.params.items():
        put(f"param/{name}", p.data)
    if optimizer is not None:
        for name in model.params:
            put(f"adam_m/{name}", optimizer.m[name])
            put(f"adam_v/{name}", optimizer.v[name])
    header = {
        "variant": model.variant,
        "config": model.config.to_dict(),
        "tensors": table,
        "adam": None if optimizer is None else optimizer.state(),
        "rng": rng_state,
        "extra": extra or {},
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(hb)))
        fh.write(hb)
        for b in blobs:
            fh.write(b)
    tmp.replace(path)


def load_checkpoint(path):
    """Returns ``(model, optimizer_or_None, header)``."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    start = 8 + 12
    header = json.loads(raw[start:start + hlen].decode("utf-8"))
    base = start + hlen

    def get(key):
        ent = header["tensors"][key]
        n = int(np.prod(ent["shape"])) if ent["shape"] else 1
        a = np.frombuffer(raw, dtype="<f8", count=n, offset=base + ent["offset"])
        return a.reshape(ent["shape"]).astype(np.float64)

    config = NetConfig.from_dict(header["config"])
    if config.variant != header["variant"]:
        raise CheckpointError("variant tag disagrees with config")
    model = PointNetRegressor(config, seed=0)
    model.load_arrays({n: get(f"param/{n}") for n in model.params})
    opt = None
    if header.get("adam") is not None:
        opt = Adam(model.params)
        opt.load_state(header["adam"],
                       {n: get(f"adam_m/{n}") for n in model.params},
                       {n: get(f"adam_v/{n}") for n in model.params})
    return model, opt, header
