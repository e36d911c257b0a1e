"""Versioned binary container for named tensors and JSON metadata.

One format serves dataset, model and adversarial-example files so that every
artifact round-trips bit-exactly and is diffable by byte comparison. Layout
(all integers little-endian, documented in docs/file_formats.md):

    magic   4 bytes  b"STA1"
    count   uint32   number of entries
    entry:
        name_len  uint16, then UTF-8 name
        code      uint8   0 = float64 tensor, 1 = int64 tensor, 2 = UTF-8 JSON
        ndim      uint8   (1 for JSON entries)
        dims      uint32 * ndim
        payload   little-endian values, row-major (raw bytes for JSON)

Entries are written sorted by name, which makes the file bytes a pure
function of the entry mapping.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"STA1"

_F64 = 0
_I64 = 1
_JSON = 2


def save_archive(path, entries: dict) -> None:
    """Write a mapping of names to float64/int64 arrays or JSON-able objects.

    Values that are ``np.ndarray`` are stored as tensors (float dtypes as
    float64, integer dtypes as int64); anything else is serialized as a JSON
    entry.
    """
    chunks = [MAGIC, struct.pack("<I", len(entries))]
    for name in sorted(entries):
        value = entries[name]
        raw_name = name.encode("utf-8")
        if isinstance(value, np.ndarray):
            if np.issubdtype(value.dtype, np.integer) or value.dtype == np.bool_:
                arr = np.ascontiguousarray(value, dtype="<i8")
                code = _I64
            else:
                arr = np.ascontiguousarray(value, dtype="<f8")
                code = _F64
            dims = arr.shape
            payload = arr.tobytes()
        else:
            payload = json.dumps(value, sort_keys=True).encode("utf-8")
            code = _JSON
            dims = (len(payload),)
        chunks.append(struct.pack("<H", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<BB", code, len(dims)))
        chunks.append(struct.pack(f"<{len(dims)}I", *dims))
        chunks.append(payload)
    Path(path).write_bytes(b"".join(chunks))


def load_archive(path) -> dict:
    """Read a mapping written by :func:`save_archive`."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a tensor archive (bad magic {data[:4]!r})")
    (count,) = struct.unpack_from("<I", data, 4)
    offset = 8
    entries = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        code, ndim = struct.unpack_from("<BB", data, offset)
        offset += 2
        dims = struct.unpack_from(f"<{ndim}I", data, offset)
        offset += 4 * ndim
        size = int(np.prod(dims, dtype=np.int64))
        if code == _JSON:
            entries[name] = json.loads(data[offset : offset + size].decode("utf-8"))
            offset += size
        else:
            dtype = "<f8" if code == _F64 else "<i8"
            nbytes = size * 8
            arr = np.frombuffer(data[offset : offset + nbytes], dtype=dtype)
            entries[name] = arr.reshape(dims).copy()
            offset += nbytes
    return entries
