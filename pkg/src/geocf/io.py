"""Byte-deterministic binary container for named float64/int64 arrays.

Layout: magic ``b"GEOCFBIN"``, uint32 format version, uint64 header length,
UTF-8 JSON header (sorted keys), then each array's little-endian bytes in
header order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"GEOCFBIN"
FORMAT_VERSION = 1
_DTYPES = {"f8": np.dtype("<f8"), "i8": np.dtype("<i8")}


def write_container(path, meta: dict, arrays: dict) -> None:
    entries = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = "f8" if arr.dtype.kind == "f" else "i8"
        data = np.ascontiguousarray(arr, dtype=_DTYPES[code])
        entries.append({"name": name, "dtype": code, "shape": list(data.shape)})
        blobs.append(data.tobytes())
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_container(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a geocf container")
    version, hlen = struct.unpack_from("<IQ", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    pos = len(MAGIC) + 12
    header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    arrays = {}
    for e in header["arrays"]:
        dt = _DTYPES[e["dtype"]]
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        nbytes = count * dt.itemsize
        arrays[e["name"]] = np.frombuffer(raw[pos:pos + nbytes], dtype=dt).reshape(e["shape"]).copy()
        pos += nbytes
    if pos != len(raw):
        raise ValueError(f"{path}: trailing or missing bytes")
    return header["meta"], arrays
