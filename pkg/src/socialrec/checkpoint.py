"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"CLSR" | u16 version | u32 n_arrays | u32 header_crc
    n_arrays x ( u16 name_len | name utf-8 | u8 ndim | ndim x u64 dim )
    array payloads, float64 little-endian, in table order
    u64 json_len | metadata JSON (utf-8)
    u32 crc32 of everything after the fixed header

``header_crc`` covers the array table so a damaged table is reported as such
rather than as a bogus shape.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"CLSR"
VERSION = 1
_FIXED = struct.Struct("<4sHII")


@dataclass
class Checkpoint:
    arrays: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)


def _encode_table(arrays: dict[str, np.ndarray]) -> bytes:
    parts = []
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    return b"".join(parts)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    arrays = {k: np.asarray(v, dtype="<f8") for k, v in ckpt.arrays.items()}
    table = _encode_table(arrays)
    meta = json.dumps(ckpt.metadata, sort_keys=True).encode("utf-8")
    body = table + b"".join(a.tobytes(order="C") for a in arrays.values())
    body += struct.pack("<Q", len(meta)) + meta
    head = _FIXED.pack(MAGIC, VERSION, len(arrays), zlib.crc32(table))
    Path(path).write_bytes(head + body + struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < _FIXED.size + 4:
        raise CheckpointError("truncated checkpoint: shorter than the fixed header")
    magic, version, n_arrays, table_crc = _FIXED.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic bytes {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version} (this build reads {VERSION})")
    pos = _FIXED.size
    specs = []
    try:
        for _ in range(n_arrays):
            (name_len,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}Q", blob, pos)
            pos += 8 * ndim
            specs.append((name, shape))
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupted array table: {exc}") from exc
    if zlib.crc32(blob[_FIXED.size : pos]) != table_crc:
        raise CheckpointError("corrupted array table: header checksum mismatch")
    if zlib.crc32(blob[_FIXED.size : -4]) != struct.unpack_from("<I", blob, len(blob) - 4)[0]:
        size = sum(8 * int(np.prod(s)) for _, s in specs)
        if len(blob) < pos + size + 12:
            raise CheckpointError("truncated checkpoint: payload shorter than the array table says")
        raise CheckpointError("corrupted payload: checksum mismatch")
    arrays = {}
    for name, shape in specs:
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    (meta_len,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    metadata = json.loads(blob[pos : pos + meta_len].decode("utf-8"))
    return Checkpoint(arrays, metadata)
