"""
KYDX1 signature index file.

Layout (little-endian):
    magic   b"KYDX1"
    header  seed u64, bands u16, rows u16, count u64
    record  id length u16, UTF-8 id, OnesSet bitmask u64, 128 x u32 minima

Buckets are not stored; they are rebuilt from the signatures on load.
"""

import io
import logging
import struct

import numpy as np

from Keye_Curation.exceptions import FormatError
from .hashing import OnesSet
from .minhash import NUM_PERM, SENTINEL, LshIndex, MinHashSignature, check_banding

logger = logging.getLogger(__name__)

MAGIC = b'KYDX1'
_HEADER = struct.Struct('<QHHQ')
_ID_LEN = struct.Struct('<H')
_MASK = struct.Struct('<Q')
_MINIMA_BYTES = NUM_PERM * 4


def dump_index(index):
    """
    Serialize an LSH index to KYDX1 bytes in insertion order.

    Args:
        index: LshIndex to encode

    Returns:
        bytes: magic, header, then one (id, bitmask, minima) record per image

    Raises:
        FormatError: if a record id exceeds 65535 UTF-8 bytes
    """
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(_HEADER.pack(index.seed, index.bands, index.rows_per_band, len(index.sets)))
    for record_id, ones in index.sets.items():
        encoded = record_id.encode('utf-8')
        if len(encoded) > 0xFFFF:
            raise FormatError(f"Record id is too long to store ({len(encoded)} bytes).", record_id=record_id)
        out.write(_ID_LEN.pack(len(encoded)))
        out.write(encoded)
        out.write(_MASK.pack(ones.mask))
        out.write(index.signatures[record_id].minima.astype('<u4').tobytes())
    return out.getvalue()


def _take(buffer, offset, size, what):
    end = offset + size
    if end > len(buffer):
        raise FormatError(f"Truncated index file while reading {what} at byte {offset}.")
    return buffer[offset:end], end


def parse_index(data):
    """
    Rebuild an LSH index from KYDX1 bytes.

    Args:
        data: bytes-like KYDX1 payload

    Returns:
        LshIndex: index with the stored seed, banding and records

    Raises:
        FormatError: on bad magic, truncation, invalid UTF-8 ids or trailing bytes
        ConfigurationError: if the stored banding does not cover 128 permutations
    """
    data = memoryview(bytes(data))
    magic, offset = _take(data, 0, len(MAGIC), 'magic')
    if bytes(magic) != MAGIC:
        raise FormatError(f"Not a KYDX1 index (magic {bytes(magic)!r}).")
    raw, offset = _take(data, offset, _HEADER.size, 'header')
    seed, bands, rows, count = _HEADER.unpack(raw)
    check_banding(bands, rows)

    index = LshIndex(seed=seed, bands=bands, rows_per_band=rows)
    for _ in range(count):
        raw, offset = _take(data, offset, _ID_LEN.size, 'id length')
        (id_len,) = _ID_LEN.unpack(raw)
        raw, offset = _take(data, offset, id_len, 'id')
        try:
            record_id = bytes(raw).decode('utf-8')
        except UnicodeDecodeError as exc:
            raise FormatError(f"Record id is not valid UTF-8: {exc}.")
        raw, offset = _take(data, offset, _MASK.size, 'bitmask')
        ones = OnesSet.from_mask(_MASK.unpack(raw)[0])
        raw, offset = _take(data, offset, _MINIMA_BYTES, 'minima')
        minima = np.frombuffer(raw, dtype='<u4').astype(np.uint32)
        signature = MinHashSignature(minima, empty_flag=not ones.positions and bool(np.all(minima == SENTINEL)))
        index._insert(record_id, ones, signature)
    if offset != len(data):
        raise FormatError(f"Trailing {len(data) - offset} bytes after {count} records.")
    return index


def save_index(index, path):
    payload = dump_index(index)
    with open(path, 'wb') as f:
        f.write(payload)
    logger.info(f"Wrote index with {len(index)} records to {path}")


def load_index(path):
    """Read a KYDX1 file written by save_index."""
    with open(path, 'rb') as f:
        index = parse_index(f.read())
    logger.info(f"Loaded index with {len(index)} records from {path}")
    return index
