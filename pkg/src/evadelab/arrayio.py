"""Deterministic on-disk container for JSON metadata plus named arrays.

numpy's npz wraps a zip archive whose member timestamps change on every
write, so identical contents do not produce identical bytes.  Model and
index files need byte-stable serialization for the reproducibility checks,
hence this small self-describing format:

    magic "EVLB1\\n", 8-byte little-endian header length, JSON header,
    raw little-endian C-order array bytes in header order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"EVLB1\n"


def pack(meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    entries = []
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += len(header).to_bytes(8, "little")
    out += header
    for blob in blobs:
        out += blob
    return bytes(out)


def unpack(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if data[: len(MAGIC)] != MAGIC:
        raise ValueError("not an EVLB1 container")
    pos = len(MAGIC)
    header_len = int.from_bytes(data[pos : pos + 8], "little")
    pos += 8
    header = json.loads(data[pos : pos + header_len].decode("utf-8"))
    pos += header_len
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = dtype.itemsize * count
        arr = np.frombuffer(data[pos : pos + nbytes], dtype=dtype).reshape(shape).copy()
        pos += nbytes
        arrays[entry["name"]] = arr
    return header["meta"], arrays


def write_file(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(pack(meta, arrays))


def read_file(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    return unpack(Path(path).read_bytes())
