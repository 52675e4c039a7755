"""
Loading helpers for the decontamination commands.
"""

from Keye_Curation.exceptions import CurationError
from toolkit.jsonl import validated_records
from .records import EmbeddingRecord, SampleManifestEntry, is_binary_embeddings, parse_embeddings
from .serializers import EmbeddingRecordSerializer, SampleManifestEntrySerializer


def _raise(error):
    raise error


def load_manifest(path, on_error=_raise):
    """
    Read a sample manifest.

    Args:
        path: JSONL file of manifest entries
        on_error: called with each CurationError; raises by default

    Returns:
        list: SampleManifestEntry for every valid line
    """
    entries = []
    for line, data in validated_records(path, SampleManifestEntrySerializer, on_error, id_field='sample_id'):
        try:
            entries.append(SampleManifestEntry(
                sample_id=data['sample_id'],
                image_ids=data['image_ids'],
                split=data['split'],
                benchmark_name=data['benchmark_name'],
                source=data['source'],
            ))
        except CurationError as exc:
            on_error(exc.with_context(path=path, line=line))
    return entries


def load_embeddings(path, on_error=_raise):
    """Read embeddings from JSONL or a KYEM1 file (detected by magic)."""
    if is_binary_embeddings(path):
        with open(path, 'rb') as f:
            try:
                return parse_embeddings(f.read())
            except CurationError as exc:
                raise exc.with_context(path=path)

    records = []
    for line, data in validated_records(path, EmbeddingRecordSerializer, on_error):
        try:
            records.append(EmbeddingRecord(data['id'], data['image_vec'], data['text_vec']))
        except CurationError as exc:
            on_error(exc.with_context(path=path, line=line))
    return records
