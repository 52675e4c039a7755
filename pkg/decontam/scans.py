"""
Benchmark leakage scans.

Hash scan: a train image is flagged when some benchmark image verifies at
Jaccard > 0.95; a sample is flagged when any of its images is. Embedding
scan: a train record is flagged when a benchmark record exceeds both the image
and text cosine thresholds (or either, in "or" mode). Every comparison is a
strict `>`.
"""

import logging
import math

import numpy as np

from Keye_Curation.exceptions import DataIntegrityError, InvalidInputError
from dedup.minhash import query_candidates
from toolkit.pool import bounded_map
from .records import NORM_TOLERANCE
from .reports import LeakageReport

logger = logging.getLogger(__name__)

IMAGE_THRESHOLD = 0.98
TEXT_THRESHOLD = 0.50
PAIR_SCORE_THRESHOLD = 0.9
EMBED_MODES = ('and', 'or')
UNATTRIBUTED = 'unattributed'
_CHUNK_ROWS = 1024


def benchmark_lookup(bench_entries):
    """Map benchmark image id to the benchmark names that contain it."""
    lookup = {}
    for entry in bench_entries:
        for image_id in entry.image_ids:
            lookup.setdefault(image_id, set()).add(entry.benchmark_name)
    return {image_id: tuple(sorted(names)) for image_id, names in lookup.items()}


def match_images(image_ids, train_hashes, bench_index, seed, benchmark_of=None, workers=1):
    """
    Return {train image id: benchmarks it duplicates} for flagged images only.

    Args:
        image_ids: train image ids; repeats are queried once.
        train_hashes: {image id: OnesSet}.
        bench_index: LshIndex over benchmark images, read-only here.
        seed: permutation seed, must match the index.
        benchmark_of: {benchmark image id: benchmark names}; hits missing from
            it count as unattributed.
        workers: query threads.
    """
    benchmark_of = benchmark_of or {}

    def benchmarks_for(image_id):
        benchmarks = set()
        for verdict in query_candidates(bench_index, train_hashes[image_id], seed, query_id=image_id):
            if verdict.is_duplicate:
                benchmarks.update(benchmark_of.get(verdict.id_b, (UNATTRIBUTED,)))
        return tuple(sorted(benchmarks))

    ids = sorted(set(image_ids))
    found = bounded_map(benchmarks_for, ids, workers=workers)
    return {image_id: benchmarks for image_id, benchmarks in zip(ids, found) if benchmarks}


def flag_samples(train, image_matches):
    """Whole-sample rule: {sample id: benchmarks} for samples with any flagged image."""
    flagged = {}
    for entry in train:
        benchmarks = set()
        for image_id in entry.image_ids:
            benchmarks.update(image_matches.get(image_id, ()))
        if benchmarks:
            flagged[entry.sample_id] = tuple(sorted(benchmarks))
    return flagged


def build_report(train, flagged):
    """One count per (source, benchmark) for every flagged sample."""
    report = LeakageReport()
    for entry in train:
        for bench in flagged.get(entry.sample_id, ()):
            report.add(entry.source, bench)
    return report


def check_hashes(train, train_hashes):
    for entry in train:
        for image_id in entry.image_ids:
            if image_id not in train_hashes:
                raise DataIntegrityError(
                    f"No hash for image {image_id!r}.", record_id=entry.sample_id
                )


def scan_hash_leakage(train, train_hashes, bench_index, seed, benchmark_of=None):
    """Return (flagged sample ids, leakage report) for a train manifest."""
    train = list(train)
    check_hashes(train, train_hashes)
    image_ids = [image_id for entry in train for image_id in entry.image_ids]
    matches = match_images(image_ids, train_hashes, bench_index, seed, benchmark_of)
    flagged = flag_samples(train, matches)
    logger.info(
        f"Hash scan: {len(matches)} of {len(set(image_ids))} images and "
        f"{len(flagged)} of {len(train)} samples flagged"
    )
    return set(flagged), build_report(train, flagged)


def _stack(records, attr, tolerance):
    dims = {getattr(r, attr).size for r in records}
    if len(dims) > 1:
        raise InvalidInputError(f"Mixed {attr} dimensions: {sorted(dims)}.")
    for record in records:
        record.check_normalized(tolerance)
    return np.stack([getattr(r, attr) for r in records])


def scan_embedding_leakage(train, bench, image_threshold=IMAGE_THRESHOLD,
                           text_threshold=TEXT_THRESHOLD, mode='and',
                           tolerance=NORM_TOLERANCE):
    """
    Flag train records that lie too close to any benchmark record.

    Args:
        train: iterable of EmbeddingRecord from the training set
        bench: iterable of EmbeddingRecord from the benchmarks
        image_threshold: cosine above which images count as a match
        text_threshold: cosine above which texts count as a match
        mode: 'and' needs both cosines over threshold for one benchmark record, 'or' either
        tolerance: allowed deviation of every vector norm from 1

    Returns:
        set: ids of flagged train records
    """
    if mode not in EMBED_MODES:
        raise InvalidInputError(f"Unknown threshold mode {mode!r}; expected one of {EMBED_MODES}.")
    train, bench = list(train), list(bench)
    if not train or not bench:
        return set()

    train_img = _stack(train, 'image_vec', tolerance)
    train_txt = _stack(train, 'text_vec', tolerance)
    bench_img = _stack(bench, 'image_vec', tolerance)
    bench_txt = _stack(bench, 'text_vec', tolerance)
    if train_img.shape[1] != bench_img.shape[1] or train_txt.shape[1] != bench_txt.shape[1]:
        raise InvalidInputError("Train and benchmark embeddings have different dimensions.")

    combine = np.logical_and if mode == 'and' else np.logical_or
    flagged = set()
    for start in range(0, len(train), _CHUNK_ROWS):
        stop = start + _CHUNK_ROWS
        hits = combine(
            train_img[start:stop] @ bench_img.T > image_threshold,
            train_txt[start:stop] @ bench_txt.T > text_threshold,
        ).any(axis=1)
        flagged.update(train[start + i].id for i in np.flatnonzero(hits))
    logger.info(f"Embedding scan ({mode}): {len(flagged)} of {len(train)} records flagged")
    return flagged


def filter_pair_score(records, threshold=PAIR_SCORE_THRESHOLD):
    """Split (id, score) pairs into kept (score > threshold) and dropped, order preserved."""
    kept, dropped = [], []
    for record_id, score in records:
        if not math.isfinite(score):
            raise InvalidInputError(f"Score {score!r} is not finite.", record_id=record_id)
        (kept if score > threshold else dropped).append(record_id)
    return kept, dropped
