"""Versioned binary container for model checkpoints.

Byte layout (all integers little-endian):

    offset 0   magic bytes b"DWCK"
    offset 4   u32 format version (currently 1)
    offset 8   u64 header length H
    offset 16  H bytes of UTF-8 JSON header
    offset 16+H  payload: raw tensor data, row-major, little-endian

The JSON header holds {"kind", "meta", "tensors"} where "tensors" lists
{"name", "dtype", "shape", "offset", "nbytes"} with offsets relative to
the payload start. "kind" distinguishes container flavors ("network" for
a single net; composite models define their own kinds on the same
envelope). Deserializing is lossless: tensor bytes and JSON floats
round-trip bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .layers import LayerSpec, param_shapes
from .network import Network

MAGIC = b"DWCK"
FORMAT_VERSION = 1
_FIXED = 16  # magic + version + header length


class CheckpointError(ValueError):
    """Raised for malformed, truncated or unsupported checkpoint streams."""


def pack_container(kind: str, meta: dict, tensors: dict[str, np.ndarray]) -> bytes:
    directory = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        directory.append({"name": name, "dtype": arr.dtype.str[1:], "shape": list(arr.shape),
                          "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"kind": kind, "meta": meta, "tensors": directory},
                        sort_keys=True).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += FORMAT_VERSION.to_bytes(4, "little")
    out += len(header).to_bytes(8, "little")
    out += header
    for raw in chunks:
        out += raw
    return bytes(out)


def unpack_container(blob: bytes, expect_kind: str | None = None):
    """Parse a container; returns (kind, meta, tensors)."""
    if len(blob) < _FIXED:
        raise CheckpointError(
            f"truncated checkpoint: {len(blob)} bytes, need at least {_FIXED} for the header")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic at byte 0: {blob[:4]!r}, expected {MAGIC!r}")
    version = int.from_bytes(blob[4:8], "little")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format version {version} (supported: {FORMAT_VERSION})")
    header_len = int.from_bytes(blob[8:16], "little")
    if len(blob) < _FIXED + header_len:
        raise CheckpointError(
            f"truncated checkpoint at byte {len(blob)}: header ends at {_FIXED + header_len}")
    try:
        header = json.loads(blob[_FIXED:_FIXED + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt header starting at byte {_FIXED}: {exc}") from exc
    for key in ("kind", "meta", "tensors"):
        if key not in header:
            raise CheckpointError(f"header missing {key!r} field")
    kind = header["kind"]
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(f"checkpoint kind {kind!r}, expected {expect_kind!r}")
    payload = blob[_FIXED + header_len:]
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise CheckpointError(
                f"truncated checkpoint: tensor {entry['name']!r} needs payload bytes "
                f"{start}..{start + nbytes}, payload has {len(payload)}")
        dtype = np.dtype("<" + entry["dtype"])
        arr = np.frombuffer(payload[start:start + nbytes], dtype=dtype)
        shape = tuple(entry["shape"])
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(
                f"tensor {entry['name']!r}: {arr.size} values do not fill shape {shape}")
        tensors[entry["name"]] = arr.reshape(shape).copy()
    return kind, header["meta"], tensors


@dataclass
class ModelCheckpoint:
    """Single-network checkpoint: ordered layer specs, parameters, metadata."""

    specs: list[LayerSpec]
    params: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        expected: dict[str, tuple[int, ...]] = {}
        for i, spec in enumerate(self.specs):
            for name, shape in param_shapes(spec).items():
                expected[f"{i}.{name}"] = shape
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise CheckpointError(
                f"parameters inconsistent with layer specs (missing {missing}, extra {extra})")
        for name, shape in expected.items():
            if tuple(self.params[name].shape) != shape:
                raise CheckpointError(
                    f"parameter {name!r} has shape {self.params[name].shape}, specs say {shape}")


def serialize(ckpt: ModelCheckpoint) -> bytes:
    ckpt.validate()
    meta = {"specs": [s.to_json() for s in ckpt.specs], "meta": ckpt.meta}
    return pack_container("network", meta, ckpt.params)


def deserialize(blob: bytes) -> ModelCheckpoint:
    _, meta, tensors = unpack_container(blob, expect_kind="network")
    specs = [LayerSpec.from_json(s) for s in meta["specs"]]
    ckpt = ModelCheckpoint(specs=specs, params=tensors, meta=meta["meta"])
    ckpt.validate()
    return ckpt


def network_to_checkpoint(net: Network, meta: dict | None = None) -> ModelCheckpoint:
    return ModelCheckpoint(specs=list(net.specs),
                           params={k: v.copy() for k, v in net.parameters()},
                           meta=dict(meta or {}))


def network_from_checkpoint(ckpt: ModelCheckpoint) -> Network:
    ckpt.validate()
    dtype = next(iter(ckpt.params.values())).dtype if ckpt.params else np.float32
    net = Network(ckpt.specs, seed=int(ckpt.meta.get("seed", 0)), dtype=dtype)
    net.load_parameters(ckpt.params)
    return net


def save(path, ckpt: ModelCheckpoint) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(ckpt))


def load(path) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
