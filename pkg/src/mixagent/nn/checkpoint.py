"""Flat named-tensor checkpoint files.

Layout: a magic line, one JSON header line (descriptor, tensor table, sha256
of the payload, free-form metadata), then the raw little-endian float64
payload with tensors in sorted-name order. The format is byte-deterministic.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..errors import CheckpointInvalid
from .decoder import ArchDescriptor, NetworkParams, param_shapes

MAGIC = b"MIXAGENT-CKPT 1\n"


def encode(params: NetworkParams, meta: dict | None = None) -> bytes:
    names = sorted(params.tensors)
    table, chunks, offset = [], [], 0
    for name in names:
        arr = np.ascontiguousarray(params.tensors[name], dtype="<f8")
        table.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.size
    payload = b"".join(chunks)
    header = {
        "descriptor": params.descriptor.to_dict(),
        "tensors": table,
        "sha256": hashlib.sha256(payload).hexdigest(),
        "meta": meta or {},
    }
    return MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n" + payload


def decode(blob: bytes) -> tuple[NetworkParams, dict]:
    if not blob.startswith(MAGIC):
        raise CheckpointInvalid("not a checkpoint file")
    rest = blob[len(MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise CheckpointInvalid("truncated header")
    try:
        header = json.loads(rest[:nl])
    except json.JSONDecodeError as exc:
        raise CheckpointInvalid(f"bad header: {exc}") from exc
    payload = rest[nl + 1:]
    if hashlib.sha256(payload).hexdigest() != header.get("sha256"):
        raise CheckpointInvalid("payload hash mismatch")
    desc = ArchDescriptor.from_dict(header["descriptor"])
    flat = np.frombuffer(payload, dtype="<f8")
    tensors = {}
    for ent in header["tensors"]:
        size = int(np.prod(ent["shape"])) if ent["shape"] else 1
        tensors[ent["name"]] = flat[ent["offset"]:ent["offset"] + size].reshape(ent["shape"]).astype(np.float64)
    expected = param_shapes(desc)
    if set(expected) != set(tensors) or any(tuple(tensors[k].shape) != v for k, v in expected.items()):
        raise CheckpointInvalid("tensor table does not match descriptor")
    return NetworkParams(desc, tensors), header["meta"]


def save_params(path, params: NetworkParams, meta: dict | None = None) -> str:
    blob = encode(params, meta)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load_params(path) -> tuple[NetworkParams, dict]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointInvalid(f"cannot read checkpoint {path}: {exc}") from exc
    return decode(blob)


def params_hash(params: NetworkParams) -> str:
    return hashlib.sha256(encode(params)).hexdigest()
