"""Checkpoint container for a network of DANs.

Layout (all integers little-endian)::

    b"DANCKPT\\0"                      8-byte magic
    uint64 header_len
    header                           UTF-8 JSON, header_len bytes
    payload                          raw float64 ('<f8') array data

The header holds ``format_version``, ``topology``, ``mode``, ``seed``,
free-form ``meta`` and an ``arrays`` list of ``{name, shape, offset}``
entries (offsets into the payload, in bytes). Array names are ``theta.<key>``
and ``phi.<key>``. ``theta`` is the VEC initialization the phenotype was
trained against. Headers are written with sorted keys, so saving the same
network twice yields identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .model import NetworkOfDANs, SharingMode, Topology

MAGIC = b"DANCKPT\0"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class IncompatibleCheckpoint(CheckpointError):
    pass


def _jsonable_seed(seed):
    if seed is None or isinstance(seed, int):
        return seed
    return [int(s) for s in seed]


def to_bytes(net: NetworkOfDANs, meta: dict | None = None) -> bytes:
    arrays = [(f"theta.{k}", v) for k, v in sorted(net.theta.items())]
    arrays += [(f"phi.{k}", v) for k, v in sorted(net.phi.items())]
    entries, chunks, offset = [], [], 0
    for name, arr in arrays:
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(data)
        offset += len(data)
    header = {
        "format_version": FORMAT_VERSION,
        "topology": net.topology.to_dict(),
        "mode": net.mode.value,
        "seed": _jsonable_seed(net.seed),
        "meta": meta or {},
        "arrays": entries,
    }
    hdr = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<Q", len(hdr)) + hdr + b"".join(chunks)


def from_bytes(blob: bytes) -> tuple[NetworkOfDANs, dict]:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a DAN checkpoint (bad magic)")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + hlen].decode())
    version = header.get("format_version")
    if not isinstance(version, int) or version > FORMAT_VERSION:
        raise IncompatibleCheckpoint(
            f"checkpoint format version {version} is newer than supported ({FORMAT_VERSION})"
        )
    payload = memoryview(blob)[16 + hlen:]
    theta, phi = {}, {}
    for e in header["arrays"]:
        n = int(np.prod(e["shape"], dtype=np.int64)) * 8
        arr = np.frombuffer(payload[e["offset"]:e["offset"] + n], dtype="<f8")
        arr = arr.astype(np.float64).reshape(e["shape"])
        group, key = e["name"].split(".", 1)
        (theta if group == "theta" else phi)[key] = arr
    seed = header.get("seed")
    if isinstance(seed, list):
        seed = tuple(seed)
    net = NetworkOfDANs(
        Topology.from_dict(header["topology"]), SharingMode(header["mode"]), theta, phi, seed
    )
    return net, header.get("meta", {})


def save(path, net: NetworkOfDANs, meta: dict | None = None) -> str:
    """Write ``net``; returns the sha256 of the file."""
    blob = to_bytes(net, meta)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load(path) -> tuple[NetworkOfDANs, dict]:
    return from_bytes(Path(path).read_bytes())
