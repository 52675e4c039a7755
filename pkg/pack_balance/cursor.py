"""
Sample-level resume cursor and the deterministic sharded stream it indexes.

KYCR1 layout (little-endian): magic b"KYCR1", epoch u64, shard_index u64,
sample_offset u64, shuffle_seed i64, CRC-32 u32 of all preceding bytes.
"""

import logging
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from Keye_Curation.exceptions import ConfigurationError, CorruptionError, DataIntegrityError, FormatError

logger = logging.getLogger(__name__)

MAGIC = b'KYCR1'
_BODY = struct.Struct('<QQQq')
_CRC = struct.Struct('<I')
CURSOR_SIZE = len(MAGIC) + _BODY.size + _CRC.size
U64_MAX = 2 ** 64 - 1
I64_MIN, I64_MAX = -2 ** 63, 2 ** 63 - 1


@dataclass(frozen=True)
class ResumeCursor:
    epoch: int = 0
    shard_index: int = 0
    sample_offset: int = 0
    shuffle_seed: int = 0

    def __post_init__(self):
        for name in ('epoch', 'shard_index', 'sample_offset'):
            if not 0 <= getattr(self, name) <= U64_MAX:
                raise ConfigurationError(f"Cursor {name} must be in [0, 2**64), got {getattr(self, name)}.")
        if not I64_MIN <= self.shuffle_seed <= I64_MAX:
            raise ConfigurationError(f"Cursor shuffle_seed must fit in an i64, got {self.shuffle_seed}.")

    def _body(self):
        return MAGIC + _BODY.pack(self.epoch, self.shard_index, self.sample_offset, self.shuffle_seed)

    @property
    def checksum(self):
        return zlib.crc32(self._body())


def save_cursor(cursor):
    return cursor._body() + _CRC.pack(cursor.checksum)


def load_cursor(data):
    """Decode a cursor; any flipped byte fails the checksum."""
    data = bytes(data)
    if len(data) != CURSOR_SIZE:
        raise FormatError(f"Cursor must be {CURSOR_SIZE} bytes, got {len(data)}.")
    body, (stored,) = data[:-_CRC.size], _CRC.unpack(data[-_CRC.size:])
    if zlib.crc32(body) != stored:
        raise CorruptionError("Cursor checksum mismatch.")
    if body[:len(MAGIC)] != MAGIC:
        raise FormatError("Not a KYCR1 cursor.")
    return ResumeCursor(*_BODY.unpack(body[len(MAGIC):]))


def write_cursor_atomic(path, cursor):
    """Write to a temporary file in the same directory, then rename over `path`."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(save_cursor(cursor))
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.debug(f"Saved cursor {cursor} to {path}")


def read_cursor(path):
    with open(path, 'rb') as f:
        data = f.read()
    try:
        return load_cursor(data)
    except FormatError as exc:
        raise exc.with_context(path=path)


class ShardedSampleStream:
    """
    Deterministic multi-epoch stream over shards of sample ids.

    Shards are visited in order; inside a shard samples follow a permutation
    seeded by (shuffle_seed, epoch, shard). `epochs=None` streams forever.
    """

    def __init__(self, shards, shuffle_seed, epochs=None):
        self.shards = [list(shard) for shard in shards]
        self.shuffle_seed = shuffle_seed
        self.epochs = epochs

    def order(self, epoch, shard_index):
        shard = self.shards[shard_index]
        rng = np.random.default_rng([self.shuffle_seed & 0xFFFFFFFFFFFFFFFF, epoch, shard_index])
        return [shard[i] for i in rng.permutation(len(shard))]

    def _check(self, cursor):
        if cursor.shuffle_seed != self.shuffle_seed:
            raise ConfigurationError(
                f"Cursor seed {cursor.shuffle_seed} does not match stream seed {self.shuffle_seed}."
            )
        if cursor.shard_index > len(self.shards) or (
            cursor.shard_index < len(self.shards)
            and cursor.sample_offset > len(self.shards[cursor.shard_index])
        ):
            raise DataIntegrityError(
                f"Cursor position (shard {cursor.shard_index}, offset {cursor.sample_offset}) "
                f"is outside the stream's shards."
            )

    def iter_from(self, cursor=None):
        """
        Yield (sample_id, cursor) pairs; each cursor points just past the sample
        it accompanies, so saving it resumes with the next sample.
        """
        cursor = cursor or ResumeCursor(shuffle_seed=self.shuffle_seed)
        self._check(cursor)
        if not any(self.shards):
            return
        epoch, shard_index, offset = cursor.epoch, cursor.shard_index, cursor.sample_offset
        while self.epochs is None or epoch < self.epochs:
            while shard_index < len(self.shards):
                order = self.order(epoch, shard_index)
                while offset < len(order):
                    offset += 1
                    yield order[offset - 1], ResumeCursor(epoch, shard_index, offset, self.shuffle_seed)
                shard_index, offset = shard_index + 1, 0
            epoch, shard_index = epoch + 1, 0

    def __iter__(self):
        return (sample for sample, _ in self.iter_from())
