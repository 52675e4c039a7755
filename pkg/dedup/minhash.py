"""
MinHash signatures over set-bit positions, banded LSH and exact verification.

Permutations are fixed by the seed alone: permutation k ranks every element x
of {0..63} by the 64-bit BLAKE2b digest of the little-endian triple
(seed: u64, k: u32, x: u32), ties by x. pi_k(x) is that rank. The scheme uses
no platform RNG, so signatures and bucket keys are identical across runs and
machines.
"""

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from datasketch import LeanMinHash, MinHashLSH

from Keye_Curation.exceptions import ConfigurationError, InvalidInputError
from .hashing import HASH_BITS, OnesSet

logger = logging.getLogger(__name__)

NUM_PERM = 128
SENTINEL = 0xFFFFFFFF
DEFAULT_BANDS = 32
DEFAULT_ROWS_PER_BAND = 4
DUPLICATE_THRESHOLD = Fraction(95, 100)
MAX_SEED = (1 << 64) - 1


def check_seed(seed):
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed <= MAX_SEED:
        raise ConfigurationError(f"Seed must be an integer in [0, 2**64), got {seed!r}.")
    return seed


def check_banding(bands, rows_per_band):
    if bands < 1 or rows_per_band < 1 or bands * rows_per_band != NUM_PERM:
        raise ConfigurationError(
            f"bands x rows_per_band must equal {NUM_PERM}, got {bands} x {rows_per_band}."
        )


@lru_cache(maxsize=16)
def permutation_table(seed):
    """(128, 64) table with table[k, x] = pi_k(x)."""
    check_seed(seed)
    table = np.empty((NUM_PERM, HASH_BITS), dtype=np.uint32)
    for k in range(NUM_PERM):
        keys = [
            hashlib.blake2b(struct.pack('<QII', seed, k, x), digest_size=8).digest()
            for x in range(HASH_BITS)
        ]
        order = sorted(range(HASH_BITS), key=lambda x: (keys[x], x))
        for rank, x in enumerate(order):
            table[k, x] = rank
    table.setflags(write=False)
    return table


@dataclass(frozen=True, eq=False)
class MinHashSignature:
    minima: np.ndarray
    empty_flag: bool = False

    def __post_init__(self):
        minima = np.asarray(self.minima, dtype=np.uint32)
        if minima.shape != (NUM_PERM,):
            raise InvalidInputError(f"Signature must hold {NUM_PERM} values, got shape {minima.shape}.")
        if self.empty_flag and not np.all(minima == SENTINEL):
            raise InvalidInputError("Empty signature must hold only sentinel values.")
        minima.setflags(write=False)
        object.__setattr__(self, 'minima', minima)

    def match_fraction(self, other):
        """MinHash estimate of the Jaccard similarity of the underlying sets."""
        return float(np.count_nonzero(self.minima == other.minima)) / NUM_PERM

    def __eq__(self, other):
        if not isinstance(other, MinHashSignature):
            return NotImplemented
        return self.empty_flag == other.empty_flag and np.array_equal(self.minima, other.minima)

    __hash__ = None


def minhash_signature(ones, seed):
    """Per-permutation minima over the set bits; an empty set gets the all-sentinel signature."""
    if not ones.positions:
        return MinHashSignature(np.full(NUM_PERM, SENTINEL, dtype=np.uint32), empty_flag=True)
    table = permutation_table(seed)
    return MinHashSignature(table[:, list(ones.positions)].min(axis=1))


def jaccard(a, b):
    """Exact Jaccard similarity; two empty sets are identical (1)."""
    union = (a.mask | b.mask).bit_count()
    if union == 0:
        return Fraction(1)
    return Fraction((a.mask & b.mask).bit_count(), union)


@dataclass(frozen=True)
class DuplicateVerdict:
    id_a: str
    id_b: str
    jaccard: Fraction

    @property
    def is_duplicate(self):
        return self.jaccard > DUPLICATE_THRESHOLD


def _lean(signature, seed):
    return LeanMinHash(seed=seed, hashvalues=signature.minima.astype(np.uint64))


@dataclass
class LshIndex:
    """
    Banded bucket index over MinHash signatures, backed by datasketch's
    MinHashLSH with explicit (bands, rows_per_band) parameters.

    Built by a single writer; read-only afterwards.
    """

    seed: int
    bands: int = DEFAULT_BANDS
    rows_per_band: int = DEFAULT_ROWS_PER_BAND
    signatures: dict = field(default_factory=dict)
    sets: dict = field(default_factory=dict)
    lsh: MinHashLSH = field(init=False, repr=False)

    def __post_init__(self):
        self.lsh = MinHashLSH(num_perm=NUM_PERM, params=(self.bands, self.rows_per_band))

    def __len__(self):
        return len(self.sets)

    def __contains__(self, record_id):
        return record_id in self.sets

    @property
    def buckets(self):
        """Non-empty buckets as {(band, key): sorted ids}."""
        return {
            (band, key): sorted(table.get(key))
            for band, table in enumerate(self.lsh.hashtables)
            for key in table.keys()
        }

    def _insert(self, record_id, ones, signature):
        if record_id in self.sets:
            raise InvalidInputError(f"Duplicate record id {record_id!r}.", record_id=record_id)
        self.sets[record_id] = ones
        self.signatures[record_id] = signature
        self.lsh.insert(record_id, _lean(signature, self.seed), check_duplication=False)

    def candidates(self, signature):
        if not self.sets:
            return set()
        return set(self.lsh.query(_lean(signature, self.seed)))


def build_lsh_index(records, seed, bands=DEFAULT_BANDS, rows_per_band=DEFAULT_ROWS_PER_BAND):
    """Index (id, OnesSet) records, one bucket per band per record."""
    check_banding(bands, rows_per_band)
    check_seed(seed)
    index = LshIndex(seed=seed, bands=bands, rows_per_band=rows_per_band)
    for record_id, ones in records:
        index._insert(record_id, ones, minhash_signature(ones, seed))
    logger.debug(f"Built LSH index: {len(index)} records in {bands} bands")
    return index


def query_candidates(index, query, seed, query_id=''):
    """
    Verify every record sharing a bucket with the query.

    Verdicts are sorted by descending Jaccard, then ascending id.
    """
    if seed != index.seed:
        raise ConfigurationError(
            f"Query seed {seed} does not match index seed {index.seed}."
        )
    signature = minhash_signature(query, seed)
    verdicts = [
        DuplicateVerdict(query_id, record_id, jaccard(query, index.sets[record_id]))
        for record_id in index.candidates(signature)
    ]
    verdicts.sort(key=lambda v: (-v.jaccard, v.id_b))
    return verdicts


def find_duplicate_clusters(records, seed, bands=DEFAULT_BANDS, rows_per_band=DEFAULT_ROWS_PER_BAND):
    """
    Group near-duplicates inside one corpus.

    Verified pairs are merged with union-find; clusters are returned sorted,
    each sorted by id, singletons omitted.
    """
    records = list(records)
    index = build_lsh_index(records, seed, bands, rows_per_band)
    parent = {record_id: record_id for record_id, _ in records}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for record_id, ones in records:
        for verdict in query_candidates(index, ones, seed, query_id=record_id):
            if verdict.id_b == record_id or not verdict.is_duplicate:
                continue
            root_a, root_b = find(record_id), find(verdict.id_b)
            if root_a != root_b:
                parent[max(root_a, root_b)] = min(root_a, root_b)

    groups = {}
    for record_id in parent:
        groups.setdefault(find(record_id), []).append(record_id)
    clusters = sorted(sorted(group) for group in groups.values() if len(group) > 1)
    logger.debug(f"Found {len(clusters)} duplicate clusters among {len(records)} records")
    return clusters
