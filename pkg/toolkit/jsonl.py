"""
JSONL streaming helpers and deterministic JSON rendering.
"""

import hashlib
import logging

from rest_framework.renderers import JSONRenderer
from rest_framework.utils import json

from Keye_Curation.exceptions import DataIntegrityError

logger = logging.getLogger(__name__)

_renderer = JSONRenderer()


def render_json(data):
    """Compact UTF-8 JSON bytes; NaN and infinities are rejected."""
    return _renderer.render(data)


def iter_jsonl(path, on_error=None):
    """
    Yield (line_number, record) for every non-blank line of a JSONL file.

    Malformed lines raise DataIntegrityError, or go to `on_error` and are
    skipped when it is given.
    """
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except ValueError as exc:
                error = DataIntegrityError(f"Invalid JSON: {exc}", path=path, line=line_number)
            else:
                if isinstance(record, dict):
                    yield line_number, record
                    continue
                error = DataIntegrityError("Expected a JSON object.", path=path, line=line_number)
            if on_error is None:
                raise error
            on_error(error)


def write_jsonl(path, records):
    count = 0
    with open(path, 'wb') as f:
        for record in records:
            f.write(render_json(record))
            f.write(b'\n')
            count += 1
    logger.debug(f"Wrote {count} records to {path}")
    return count


def write_json(path, data):
    with open(path, 'wb') as f:
        f.write(render_json(data))
        f.write(b'\n')


def format_errors(errors):
    """Flatten DRF serializer errors into one line."""
    parts = []
    for field, messages in sorted(errors.items()):
        if isinstance(messages, dict):
            messages = [format_errors(messages)]
        parts.append(f"{field}: {' '.join(str(m) for m in messages)}")
    return '; '.join(parts)


def validated_records(path, serializer_class, on_error, id_field='id'):
    """
    Yield (line_number, validated_data) for every valid record.

    Invalid records are passed to `on_error` as DataIntegrityError with file,
    line and id context and skipped.
    """
    for line_number, record in iter_jsonl(path, on_error):
        serializer = serializer_class(data=record)
        if serializer.is_valid():
            yield line_number, serializer.validated_data
        else:
            on_error(DataIntegrityError(
                format_errors(serializer.errors),
                path=path, line=line_number, record_id=record.get(id_field),
            ))


def shard_of(key, shard_count):
    """Stable shard index of a record id, independent of file order."""
    digest = hashlib.blake2b(key.encode('utf-8'), digest_size=8).digest()
    return int.from_bytes(digest, 'big') % shard_count
