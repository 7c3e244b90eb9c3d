"""Versioned parameter container: named float64 tensors plus a sha256 checksum.

Layout: magic ``SGCK`` | u32 version | u32 header length | JSON header |
raw little-endian float64 payload. The header lists each parameter path with
its shape and offset, the payload checksum and a free-form ``manifest``.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import DataError

MAGIC = b"SGCK"
VERSION = 1


def state_checksum(state: dict) -> str:
    h = hashlib.sha256()
    for name in sorted(state):
        arr = np.asarray(state[name].detach().cpu().numpy(), dtype="<f8", order="C")
        h.update(name.encode())
        h.update(repr(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def to_bytes(state: dict, manifest: dict | None = None) -> bytes:
    entries, chunks, offset = [], [], 0
    for name in sorted(state):
        arr = np.asarray(state[name].detach().cpu().numpy(), dtype="<f8", order="C")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.size
    payload = b"".join(chunks)
    header = {
        "params": entries,
        "sha256": hashlib.sha256(payload).hexdigest(),
        "manifest": manifest or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<II", VERSION, len(hbytes)) + hbytes + payload


def from_bytes(data: bytes):
    if data[:4] != MAGIC:
        raise DataError("not a checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    header = json.loads(data[12:12 + hlen])
    payload = data[12 + hlen:]
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise DataError("checkpoint checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f8")
    state = {}
    for e in header["params"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = flat[e["offset"]:e["offset"] + n].reshape(tuple(e["shape"]))
        state[e["name"]] = torch.from_numpy(arr.copy())
    return state, header["manifest"]


def save(path, state: dict, manifest: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(to_bytes(state, manifest))
    return path


def load(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    return from_bytes(path.read_bytes())
