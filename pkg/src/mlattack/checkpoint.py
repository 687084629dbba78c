"""Binary model checkpoints with a bit-exact round trip.

Layout: the 8-byte magic ``MLATKCKP``, a little-endian uint32 format version,
a uint32 header length, a UTF-8 JSON header (kind, dims, activations, matrix
shapes), then every matrix as row-major little-endian float64.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .model import Layer, LinearModel, MlpModel

MAGIC = b"MLATKCKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _matrices(model):
    if isinstance(model, LinearModel):
        return [model.W], dict(kind="linear", dims=[model.d, model.m], activations=[])
    acts = [l.activation for l in model.layers]
    return [l.A for l in model.layers], dict(kind="mlp", dims=model.dims, activations=acts)


def to_bytes(model) -> bytes:
    mats, header = _matrices(model)
    header["matrices"] = [list(M.shape) for M in mats]
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(M, dtype="<f8").tobytes() for M in mats)
    return MAGIC + struct.pack("<II", VERSION, len(hb)) + hb + body


def from_bytes(buf: bytes):
    if buf[:8] != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    version, hl = struct.unpack("<II", buf[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(buf[16:16 + hl].decode("utf-8"))
    off = 16 + hl
    mats = []
    for shape in header["matrices"]:
        size = int(np.prod(shape)) * 8
        if off + size > len(buf):
            raise CheckpointError("truncated checkpoint")
        mats.append(np.frombuffer(buf[off:off + size], dtype="<f8").reshape(shape).copy())
        off += size
    if off != len(buf):
        raise CheckpointError("trailing bytes after checkpoint data")
    if header["kind"] == "linear":
        return LinearModel(mats[0])
    return MlpModel(tuple(Layer(A, a) for A, a in zip(mats, header["activations"])))


def save_model(model, path) -> str:
    """Write ``model`` to ``path``; returns the checksum of the written bytes."""
    buf = to_bytes(model)
    with open(path, "wb") as fh:
        fh.write(buf)
    return hashlib.sha256(buf).hexdigest()


def load_model(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def model_checksum(model) -> str:
    return hashlib.sha256(to_bytes(model)).hexdigest()
