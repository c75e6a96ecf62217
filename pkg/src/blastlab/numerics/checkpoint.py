"""Binary container for named float64 arrays.

Layout (all integers little-endian)::

    offset 0   8 bytes   magic b"BLASTCK\\0"
    offset 8   u32       format version (1)
    offset 12  u64       header length H in bytes
    offset 20  H bytes   UTF-8 JSON header, keys sorted, no whitespace:
                         {"metadata": {...},
                          "tensors": [{"name", "shape", "offset", "count"}, ...]}
    offset 20+H          payload: each array as '<f8', row-major, at the
                         listed byte offset relative to the payload start

Arrays are written in the order given, so identical inputs always give
identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from blastlab.errors import ContractError

MAGIC = b"BLASTCK\x00"
VERSION = 1


def dumps(tensors: Mapping[str, np.ndarray], metadata: Mapping | None = None) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        a = np.asarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "count": int(a.size)})
        raw = a.tobytes(order="C")
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"metadata": dict(metadata or {}), "tensors": entries},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + b"".join(chunks)


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if blob[:8] != MAGIC:
        raise ContractError("not a checkpoint container (bad magic)")
    version, hlen = struct.unpack_from("<IQ", blob, 8)
    if version != VERSION:
        raise ContractError(f"unsupported checkpoint version {version}")
    start = 20 + hlen
    header = json.loads(blob[20:start].decode("utf-8"))
    tensors = {}
    for e in header["tensors"]:
        lo = start + e["offset"]
        arr = np.frombuffer(blob, dtype="<f8", count=e["count"], offset=lo)
        tensors[e["name"]] = arr.astype(np.float64).reshape(e["shape"])
    return tensors, header["metadata"]


def save_checkpoint(path, tensors: Mapping[str, np.ndarray], metadata: Mapping | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(tensors, metadata))
    return path


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
