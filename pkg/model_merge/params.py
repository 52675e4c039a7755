"""
Named parameter tensors and the flat checkpoint container.

Container layout (little-endian): u32 entry count, then per entry in sorted
name order: u16 name length, UTF-8 name, u8 dtype tag (1 = f32), u8 rank,
rank x u32 dims, f32 values.
"""

import logging
import struct
from collections.abc import Mapping

import numpy as np

from Keye_Curation.exceptions import DataIntegrityError, FormatError, InvalidInputError

logger = logging.getLogger(__name__)

DTYPE_F32 = 1
_COUNT = struct.Struct('<I')
_NAME_LEN = struct.Struct('<H')
_HEADER = struct.Struct('<BB')


class ParamMap(Mapping):
    """Read-only map from parameter name to a finite float tensor."""

    def __init__(self, entries):
        self._entries = {}
        for name, value in entries.items():
            if not isinstance(name, str) or not name:
                raise InvalidInputError(f"Parameter names must be non-empty strings, got {name!r}.")
            array = np.array(value, dtype=np.float64)
            if not np.isfinite(array).all():
                raise InvalidInputError(f"Parameter {name!r} contains non-finite values.")
            array.setflags(write=False)
            self._entries[name] = array

    def __getitem__(self, name):
        return self._entries[name]

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def shapes(self):
        return {name: value.shape for name, value in self._entries.items()}

    def __repr__(self):
        return f"ParamMap({len(self)} entries)"


def save_param_map(params):
    """
    Encode a parameter map, names sorted.

    Args:
        params: dict of name to numpy array

    Returns:
        bytes: count, then name, dtype, shape and raw little-endian data per entry
    """
    chunks = [_COUNT.pack(len(params))]
    for name in sorted(params):
        value = params[name]
        encoded = name.encode('utf-8')
        if len(encoded) > 0xFFFF or value.ndim > 0xFF:
            raise InvalidInputError(f"Parameter {name!r} cannot be stored in the container.")
        chunks.append(_NAME_LEN.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_HEADER.pack(DTYPE_F32, value.ndim))
        chunks.append(struct.pack(f'<{value.ndim}I', *value.shape))
        chunks.append(value.astype('<f4').tobytes())
    return b''.join(chunks)


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, size):
        if self.pos + size > len(self.data):
            raise FormatError(f"Container truncated at byte {self.pos}.")
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt):
        return fmt.unpack(self.take(fmt.size))


def load_param_map(data):
    """
    Decode bytes written by save_param_map.

    Args:
        data: bytes-like container payload

    Returns:
        dict: parameter name to numpy array
    """
    reader = _Reader(bytes(data))
    (count,) = reader.unpack(_COUNT)
    entries = {}
    for _ in range(count):
        (name_len,) = reader.unpack(_NAME_LEN)
        try:
            name = bytes(reader.take(name_len)).decode('utf-8')
        except UnicodeDecodeError:
            raise FormatError(f"Parameter name at byte {reader.pos} is not UTF-8.")
        dtype, rank = reader.unpack(_HEADER)
        if dtype != DTYPE_F32:
            raise FormatError(f"Parameter {name!r} has unsupported dtype tag {dtype}.")
        shape = struct.unpack(f'<{rank}I', reader.take(4 * rank))
        size = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(reader.take(4 * size), dtype='<f4').reshape(shape)
        if name in entries:
            raise FormatError(f"Parameter {name!r} appears twice.")
        entries[name] = values
    if reader.pos != len(reader.data):
        raise FormatError(f"{len(reader.data) - reader.pos} trailing bytes after the last entry.")
    try:
        return ParamMap(entries)
    except InvalidInputError as exc:
        raise DataIntegrityError(exc.message)


def write_param_map(path, params):
    with open(path, 'wb') as f:
        f.write(save_param_map(params))
    logger.info(f"Wrote {len(params)} parameters to {path}")


def read_param_map(path):
    with open(path, 'rb') as f:
        data = f.read()
    try:
        return load_param_map(data)
    except (FormatError, DataIntegrityError) as exc:
        raise exc.with_context(path=path)
