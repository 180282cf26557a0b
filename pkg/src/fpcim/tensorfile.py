"""Binary container for named FP16 tensors plus an optional alignment table.

Layout (little-endian):
  magic "UCIM", u16 version=1, u16 tensor_count;
  per tensor: u16 name_len, UTF-8 name, u8 dtype (0 = FP16), u8 rank,
  rank x u32 dims, payload of prod(dims) x 2 bytes (raw FP16 bit patterns);
  optional trailing section: magic "ALGN", u32 entry_count, per entry
  u16 layer_id, u32 block_id, i8 e_shared, u8 index.
"""

from __future__ import annotations

import struct
from typing import NamedTuple

import numpy as np

MAGIC = b"UCIM"
ALIGN_MAGIC = b"ALGN"
VERSION = 1
DTYPE_FP16 = 0


class AlignEntry(NamedTuple):
    layer_id: int
    block_id: int
    e_shared: int
    index: int


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


def save(path, tensors: dict, align_entries=None):
    """Write named uint16 tensors (and optional alignment entries) to path."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<HH", VERSION, len(tensors))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.uint16)
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<BB", DTYPE_FP16, arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.astype("<u2").tobytes()
    if align_entries:
        blob += ALIGN_MAGIC
        blob += struct.pack("<I", len(align_entries))
        for e in align_entries:
            blob += struct.pack("<HIbB", e.layer_id, e.block_id, e.e_shared, e.index)
    with open(path, "wb") as f:
        f.write(blob)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError(f"truncated file: need {n} bytes for {what}", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load(path):
    """Read a tensor file; returns (tensors dict, [AlignEntry] or None)."""
    with open(path, "rb") as f:
        rd = _Reader(f.read())
    if rd.take(4, "magic") != MAGIC:
        raise ParseError("bad magic, expected UCIM", 0)
    version, count = rd.unpack("<HH", "header")
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", 4)
    tensors = {}
    for _ in range(count):
        (name_len,) = rd.unpack("<H", "name length")
        name = rd.take(name_len, "name").decode("utf-8")
        dtype, rank = rd.unpack("<BB", "dtype/rank")
        if dtype != DTYPE_FP16:
            raise ParseError(f"unsupported dtype {dtype}", rd.pos - 2)
        dims = rd.unpack(f"<{rank}I", "dims")
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = rd.take(2 * n, f"payload of {name!r}")
        tensors[name] = np.frombuffer(payload, dtype="<u2").reshape(dims).astype(np.uint16)
    align = None
    if rd.pos < len(rd.data):
        if rd.take(4, "section magic") != ALIGN_MAGIC:
            raise ParseError("unknown trailing section", rd.pos - 4)
        (n_entries,) = rd.unpack("<I", "alignment count")
        align = []
        for _ in range(n_entries):
            layer, block, e_shared, index = rd.unpack("<HIbB", "alignment entry")
            align.append(AlignEntry(layer, block, e_shared, index))
    if rd.pos != len(rd.data):
        raise ParseError("trailing bytes after last section", rd.pos)
    return tensors, align


def align_entries_from_tables(tables, index: int):
    """Flatten per-tensor e_shared tables into AlignEntry rows.

    block_id counts row-major over a (groups, out_dim) table.
    """
    entries = []
    for layer_id, table in enumerate(tables):
        flat = np.asarray(table).reshape(-1)
        for block_id, e in enumerate(flat.tolist()):
            entries.append(AlignEntry(layer_id, block_id, int(e), index))
    return entries


def tables_from_align_entries(entries, shapes):
    """Inverse of align_entries_from_tables given the table shapes."""
    tables = [np.zeros(s, dtype=np.int8) for s in shapes]
    for e in entries:
        g, c = divmod(e.block_id, shapes[e.layer_id][1])
        tables[e.layer_id][g, c] = e.e_shared
    return tables
