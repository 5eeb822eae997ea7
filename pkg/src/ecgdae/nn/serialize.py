"""Versioned binary model container.

Layout (little-endian)::

    b"ECGNN\\0"  magic
    u16         format version
    u32 n, n bytes of UTF-8 JSON architecture descriptor
    for every parameter then every state array, in layer order:
        u32 n, n bytes of raw array data (dtype from the descriptor)
    b"END\\0"
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import ParseError, VersionError
from .layers import layer_from_config
from .network import Network

MAGIC = b"ECGNN\0"
VERSION = 1
TRAILER = b"END\0"


def describe(network: Network) -> dict:
    tc = network.train_config
    return {
        "name": network.name,
        "input_shape": list(network.input_shape),
        "dtype": network.dtype.str.replace("=", "<").replace("|", "<"),
        "seed": network.seed,
        "layers": [{"kind": l.kind, "config": l.config(),
                    "params": {k: list(v.shape) for k, v in l.params.items()},
                    "state": {k: list(v.shape) for k, v in l.state.items()}} for l in network.layers],
        "train_config": tc.to_dict() if hasattr(tc, "to_dict") else tc,
        "metadata": network.metadata,
    }


def serialize(network: Network) -> bytes:
    desc = json.dumps(describe(network), sort_keys=True).encode()
    dt = np.dtype(network.dtype).newbyteorder("<")
    out = [MAGIC, struct.pack("<H", VERSION), struct.pack("<I", len(desc)), desc]
    for a in network.parameters() + network.states():
        blob = np.ascontiguousarray(a, dtype=dt).tobytes()
        out += [struct.pack("<I", len(blob)), blob]
    out.append(TRAILER)
    return b"".join(out)


def deserialize(data: bytes) -> Network:
    from .train import TrainConfig

    if len(data) < len(MAGIC) + 2 or data[: len(MAGIC)] != MAGIC:
        raise VersionError("not a model file (bad magic bytes)")
    (version,) = struct.unpack_from("<H", data, len(MAGIC))
    if version != VERSION:
        raise VersionError(f"model format version {version}, expected {VERSION}")
    off = len(MAGIC) + 2

    def take(n):
        nonlocal off
        if off + n > len(data):
            raise ParseError(f"model stream truncated at byte {off} (needed {n} more)")
        chunk = data[off : off + n]
        off += n
        return chunk

    (n,) = struct.unpack("<I", take(4))
    try:
        desc = json.loads(take(n).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"corrupt architecture descriptor: {exc}") from None
    dt = np.dtype(desc["dtype"])
    layers = [layer_from_config(l["kind"], l["config"]) for l in desc["layers"]]
    tc = desc.get("train_config")
    net = Network(layers, desc["input_shape"], name=desc["name"], dtype=dt, seed=desc.get("seed", 0),
                  train_config=TrainConfig(**tc) if isinstance(tc, dict) else tc,
                  metadata=desc.get("metadata"))
    blobs = []
    for a in net.parameters() + net.states():
        (m,) = struct.unpack("<I", take(4))
        if m != a.size * dt.itemsize:
            raise ParseError(f"parameter blob of {m} bytes does not match shape {a.shape}")
        blobs.append(np.frombuffer(take(m), dtype=dt).reshape(a.shape))
    if take(len(TRAILER)) != TRAILER:
        raise ParseError("missing end marker")
    for a, b in zip(net.parameters() + net.states(), blobs):
        a[...] = b
    return net


def save(network: Network, path) -> None:
    from ..preprocess import atomic_write

    atomic_write(str(path), serialize(network))


def load(path) -> Network:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
