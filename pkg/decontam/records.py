"""
Manifest entries and embedding records, plus the KYEM1 embedding container.

KYEM1 layout (little-endian): magic b"KYEM1", dim u32, count u64, then per
record: id length u16, UTF-8 id, dim x f32 image vector, dim x f32 text vector.
"""

import io
import struct
from dataclasses import dataclass

import numpy as np

from Keye_Curation.exceptions import FormatError, InvalidInputError

SPLITS = ('train', 'benchmark')
DEFAULT_SOURCE = 'train'
NORM_TOLERANCE = 1e-3

EMBEDDING_MAGIC = b'KYEM1'
_EMBED_HEADER = struct.Struct('<IQ')
_ID_LEN = struct.Struct('<H')


@dataclass(frozen=True)
class SampleManifestEntry:
    sample_id: str
    image_ids: tuple
    split: str = 'train'
    benchmark_name: str = None
    source: str = DEFAULT_SOURCE

    def __post_init__(self):
        object.__setattr__(self, 'image_ids', tuple(self.image_ids))
        if not self.image_ids:
            raise InvalidInputError("A sample needs at least one image id.", record_id=self.sample_id)
        if self.split not in SPLITS:
            raise InvalidInputError(f"Unknown split {self.split!r}.", record_id=self.sample_id)
        if (self.split == 'benchmark') != (self.benchmark_name is not None):
            raise InvalidInputError(
                "benchmark_name must be present exactly when split is 'benchmark'.",
                record_id=self.sample_id,
            )


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    id: str
    image_vec: np.ndarray
    text_vec: np.ndarray

    def __post_init__(self):
        for name in ('image_vec', 'text_vec'):
            vec = np.asarray(getattr(self, name), dtype=np.float64)
            if vec.ndim != 1 or vec.size == 0:
                raise InvalidInputError(f"{name} must be a non-empty vector.", record_id=self.id)
            if not np.all(np.isfinite(vec)):
                raise InvalidInputError(f"{name} contains non-finite values.", record_id=self.id)
            vec.setflags(write=False)
            object.__setattr__(self, name, vec)

    @property
    def dim(self):
        return self.image_vec.size

    def check_normalized(self, tolerance=NORM_TOLERANCE):
        for name in ('image_vec', 'text_vec'):
            norm = float(np.linalg.norm(getattr(self, name)))
            if abs(norm - 1.0) > tolerance:
                raise InvalidInputError(
                    f"{name} has L2 norm {norm:.6f}, expected 1 within {tolerance}.",
                    record_id=self.id,
                )


def dump_embeddings(records):
    """
    Serialize embedding records to KYEM1 bytes.

    Args:
        records: iterable of EmbeddingRecord sharing one dimension

    Returns:
        bytes: magic, (dim, count) header, then id and float32 vectors per record
    """
    records = list(records)
    dim = records[0].dim if records else 0
    out = io.BytesIO()
    out.write(EMBEDDING_MAGIC)
    out.write(_EMBED_HEADER.pack(dim, len(records)))
    for record in records:
        if record.dim != dim or record.text_vec.size != dim:
            raise InvalidInputError(f"Record dimension differs from {dim}.", record_id=record.id)
        encoded = record.id.encode('utf-8')
        if len(encoded) > 0xFFFF:
            raise FormatError(f"Record id is too long to store ({len(encoded)} bytes).", record_id=record.id)
        out.write(_ID_LEN.pack(len(encoded)))
        out.write(encoded)
        out.write(record.image_vec.astype('<f4').tobytes())
        out.write(record.text_vec.astype('<f4').tobytes())
    return out.getvalue()


def parse_embeddings(data):
    """
    Decode KYEM1 bytes into embedding records.

    Args:
        data: bytes-like KYEM1 payload

    Returns:
        list: EmbeddingRecord per stored record, in file order
    """
    data = memoryview(bytes(data))
    if bytes(data[:len(EMBEDDING_MAGIC)]) != EMBEDDING_MAGIC:
        raise FormatError("Not a KYEM1 embedding file.")
    offset = len(EMBEDDING_MAGIC)

    def take(size, what):
        nonlocal offset
        if offset + size > len(data):
            raise FormatError(f"Truncated embedding file while reading {what} at byte {offset}.")
        chunk = data[offset:offset + size]
        offset += size
        return chunk

    dim, count = _EMBED_HEADER.unpack(take(_EMBED_HEADER.size, 'header'))
    records = []
    for _ in range(count):
        (id_len,) = _ID_LEN.unpack(take(_ID_LEN.size, 'id length'))
        try:
            record_id = bytes(take(id_len, 'id')).decode('utf-8')
        except UnicodeDecodeError as exc:
            raise FormatError(f"Record id is not valid UTF-8: {exc}.")
        image = np.frombuffer(take(4 * dim, 'image vector'), dtype='<f4')
        text = np.frombuffer(take(4 * dim, 'text vector'), dtype='<f4')
        records.append(EmbeddingRecord(record_id, image, text))
    if offset != len(data):
        raise FormatError(f"Trailing {len(data) - offset} bytes after {count} records.")
    return records


def is_binary_embeddings(path):
    with open(path, 'rb') as f:
        return f.read(len(EMBEDDING_MAGIC)) == EMBEDDING_MAGIC


def write_embeddings_binary(path, records):
    with open(path, 'wb') as f:
        f.write(dump_embeddings(records))
