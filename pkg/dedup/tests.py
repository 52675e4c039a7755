import math
from fractions import Fraction

import numpy as np
from django.test import SimpleTestCase

from Keye_Curation.exceptions import ConfigurationError, FormatError, InvalidInputError
from .hashing import (
    LumaMatrix, OnesSet, PHash64, bilinear_resample, compute_phash, hamming_distance, ones_positions,
)
from .minhash import (
    NUM_PERM, SENTINEL, build_lsh_index, find_duplicate_clusters, jaccard, minhash_signature,
    permutation_table, query_candidates,
)
from .serializers import ImageHashSerializer
from .storage import dump_index, parse_index


def random_set(rng, size):
    return OnesSet(tuple(sorted(int(x) for x in rng.choice(64, size=size, replace=False))))


class PerceptualHashTest(SimpleTestCase):
    """Test cases for pHash computation."""

    def setUp(self):
        self.rng = np.random.default_rng(1234)

    def test_identical_matrices_hash_identically(self):
        """Test that hashing is deterministic"""
        values = self.rng.random((40, 57))
        self.assertEqual(compute_phash(LumaMatrix(values)), compute_phash(LumaMatrix(values.copy())))

    def test_constant_matrix_sets_only_dc_bit(self):
        """Test that a flat image has no AC bit set"""
        phash = compute_phash(LumaMatrix(np.full((32, 32), 0.5)))
        self.assertEqual(phash.bits, 0x1)

        other = compute_phash(LumaMatrix(np.full((7, 300), 0.5)))
        self.assertEqual(other, phash)

    def test_black_matrix_hashes_to_zero(self):
        """Test that an all-zero image has no set bit"""
        self.assertEqual(compute_phash(LumaMatrix(np.zeros((16, 16)))).bits, 0)

    def test_upscale_changes_few_bits(self):
        """Test that a 2x bilinear upscale stays within a small Hamming distance"""
        distances = []
        for _ in range(100):
            base = bilinear_resample(self.rng.random((16, 16)), 64)
            upscaled = bilinear_resample(base, 128)
            distances.append(hamming_distance(
                compute_phash(LumaMatrix(base)), compute_phash(LumaMatrix(upscaled))
            ))
        self.assertLessEqual(float(np.mean(distances)), 4.0)
        self.assertLessEqual(max(distances), 12)

    def test_invalid_matrices_rejected(self):
        """Test luminance matrix validation"""
        with self.assertRaises(InvalidInputError):
            LumaMatrix(np.zeros((0, 3)))
        with self.assertRaises(InvalidInputError):
            LumaMatrix(np.array([[0.5, np.nan]]))
        with self.assertRaises(InvalidInputError):
            LumaMatrix(np.array([[1.5]]))

    def test_ones_positions(self):
        """Test set-bit enumeration"""
        self.assertEqual(ones_positions(PHash64(0x0)).positions, ())
        self.assertEqual(ones_positions(PHash64(0x1)).positions, (0,))
        self.assertEqual(ones_positions(PHash64(0b1011)).positions, (0, 1, 3))
        self.assertEqual(len(ones_positions(PHash64((1 << 64) - 1))), 64)

    def test_hex_round_trip(self):
        """Test hash hex rendering"""
        phash = PHash64(0xB)
        self.assertEqual(phash.hex, '000000000000000b')
        self.assertEqual(PHash64.from_hex(phash.hex), phash)
        with self.assertRaises(InvalidInputError):
            PHash64.from_hex('b')
        with self.assertRaises(InvalidInputError):
            PHash64.from_hex('zz00000000000000')

    def test_ones_set_must_be_ascending(self):
        """Test OnesSet validation"""
        with self.assertRaises(InvalidInputError):
            OnesSet((3, 1))
        with self.assertRaises(InvalidInputError):
            OnesSet((64,))


class MinHashTest(SimpleTestCase):
    """Test cases for MinHash signatures and exact Jaccard."""

    def setUp(self):
        self.rng = np.random.default_rng(99)
        self.seed = 42

    def test_signature_deterministic(self):
        """Test that equal sets and seeds give equal signatures"""
        ones = OnesSet((1, 5, 9, 33))
        self.assertEqual(minhash_signature(ones, self.seed), minhash_signature(OnesSet((1, 5, 9, 33)), self.seed))

    def test_permutation_table_is_a_permutation(self):
        """Test that every row ranks all 64 positions exactly once"""
        table = permutation_table(self.seed)
        self.assertEqual(table.shape, (NUM_PERM, 64))
        for row in table:
            self.assertEqual(sorted(row.tolist()), list(range(64)))

    def test_empty_set_signature(self):
        """Test the empty-set sentinel convention"""
        signature = minhash_signature(OnesSet(), self.seed)
        self.assertTrue(signature.empty_flag)
        self.assertTrue(np.all(signature.minima == SENTINEL))

    def test_signature_estimates_jaccard(self):
        """Test estimator calibration over 1000 random pairs"""
        inside = 0
        for _ in range(1000):
            a, b = random_set(self.rng, 32), random_set(self.rng, 32)
            true = float(jaccard(a, b))
            estimate = minhash_signature(a, self.seed).match_fraction(minhash_signature(b, self.seed))
            if abs(estimate - true) <= 3 * math.sqrt(true * (1 - true) / NUM_PERM) + 1e-12:
                inside += 1
        self.assertGreaterEqual(inside, 980)

    def test_jaccard_examples(self):
        """Test exact Jaccard on the reference cases"""
        self.assertEqual(jaccard(OnesSet((1, 2, 3, 4)), OnesSet((1, 2, 3, 4))), 1)
        self.assertEqual(jaccard(OnesSet(), OnesSet((5,))), 0)
        self.assertEqual(jaccard(OnesSet(), OnesSet()), 1)

        a = OnesSet(tuple(range(32)))
        b = OnesSet(tuple(range(31)) + (32,))
        self.assertEqual(jaccard(a, b), Fraction(31, 33))

    def test_seed_out_of_range(self):
        """Test that seeds outside u64 are configuration errors"""
        with self.assertRaises(ConfigurationError):
            minhash_signature(OnesSet((1,)), -1)
        with self.assertRaises(ConfigurationError):
            minhash_signature(OnesSet((1,)), 1 << 64)


class LshIndexTest(SimpleTestCase):
    """Test cases for the banded LSH index."""

    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.seed = 2024

    def test_empty_index(self):
        """Test that no records give no buckets"""
        index = build_lsh_index([], self.seed)
        self.assertEqual(len(index.buckets), 0)
        self.assertEqual(query_candidates(index, OnesSet((1, 2)), self.seed), [])

    def test_identical_sets_share_every_bucket(self):
        """Test that identical sets collide in all 32 bands"""
        ones = random_set(self.rng, 20)
        index = build_lsh_index([('a', ones), ('b', ones)], self.seed)
        self.assertEqual(len(index.buckets), 32)
        for members in index.buckets.values():
            self.assertEqual(members, ['a', 'b'])

    def test_candidates_match_band_collisions(self):
        """Test that candidates are exactly the records agreeing on some whole band"""
        records = [(f'r{i}', random_set(self.rng, int(self.rng.integers(1, 12)))) for i in range(300)]
        index = build_lsh_index(records, self.seed)
        for _, query in records[:40]:
            signature = minhash_signature(query, self.seed)
            bands = signature.minima.reshape(32, 4)
            expected = {
                record_id for record_id, other in index.signatures.items()
                if (other.minima.reshape(32, 4) == bands).all(axis=1).any()
            }
            self.assertEqual(index.candidates(signature), expected)

    def test_bad_banding_rejected(self):
        """Test that bands x rows must cover 128 permutations"""
        with self.assertRaises(ConfigurationError):
            build_lsh_index([], self.seed, bands=16, rows_per_band=4)

    def test_duplicate_id_rejected(self):
        """Test that ids must be unique"""
        with self.assertRaises(InvalidInputError):
            build_lsh_index([('a', OnesSet((1,))), ('a', OnesSet((2,)))], self.seed)

    def test_identical_query_is_duplicate(self):
        """Test that an indexed set finds itself"""
        ones = random_set(self.rng, 30)
        index = build_lsh_index([('x', ones)], self.seed)
        [verdict] = query_candidates(index, ones, self.seed, query_id='p')
        self.assertEqual(verdict.jaccard, 1)
        self.assertTrue(verdict.is_duplicate)

    def test_disjoint_query_not_duplicate(self):
        """Test that verdicts for a disjoint query are never duplicates"""
        index = build_lsh_index([('x', OnesSet(tuple(range(32))))], self.seed)
        for verdict in query_candidates(index, OnesSet(tuple(range(32, 64))), self.seed):
            self.assertFalse(verdict.is_duplicate)

    def test_seed_mismatch_rejected(self):
        """Test that probing with another seed is a configuration error"""
        index = build_lsh_index([('x', OnesSet((1,)))], self.seed)
        with self.assertRaises(ConfigurationError):
            query_candidates(index, OnesSet((1,)), self.seed + 1)

    def test_planted_pairs_recalled(self):
        """Test that pairs with Jaccard 0.975 always collide"""
        records, queries = [], []
        for i in range(200):
            ones = random_set(self.rng, 40)
            records.append((f'r{i}', ones))
            queries.append((f'r{i}', OnesSet(ones.positions[1:])))
        index = build_lsh_index(records, self.seed)
        for expected_id, query in queries:
            verdicts = query_candidates(index, query, self.seed)
            hits = {v.id_b for v in verdicts if v.is_duplicate}
            self.assertIn(expected_id, hits)

    def test_planted_neighbor_in_large_corpus(self):
        """Test LSH verdicts against a brute-force Jaccard oracle"""
        records = [(f'n{i:05d}', random_set(self.rng, 50)) for i in range(10000)]
        planted = records[1234][1]
        query = OnesSet(planted.positions[:-1])
        self.assertEqual(jaccard(query, planted), Fraction(49, 50))

        index = build_lsh_index(records, self.seed)
        verdicts = query_candidates(index, query, self.seed)
        flagged = {v.id_b for v in verdicts if v.is_duplicate}
        oracle = {record_id for record_id, ones in records if jaccard(query, ones) > Fraction(95, 100)}
        self.assertEqual(flagged, oracle)
        self.assertIn('n01234', flagged)

        for verdict in verdicts:
            self.assertEqual(verdict.is_duplicate, jaccard(query, index.sets[verdict.id_b]) > Fraction(95, 100))
        keys = [(-v.jaccard, v.id_b) for v in verdicts]
        self.assertEqual(keys, sorted(keys))

    def test_duplicate_clusters(self):
        """Test grouping near-duplicates inside one corpus"""
        base = random_set(self.rng, 45)
        records = [
            ('b', base),
            ('a', OnesSet(base.positions[1:])),
            ('c', OnesSet(tuple(p for p in range(64) if p not in base.positions))),
        ]
        self.assertEqual(find_duplicate_clusters(records, self.seed), [['a', 'b']])

    def test_brute_force_soundness(self):
        """Test that every verdict agrees with exact Jaccard"""
        sets = [(f's{i}', random_set(self.rng, 60)) for i in range(30)]
        index = build_lsh_index(sets, self.seed)
        for _, a in sets[:10]:
            for verdict in query_candidates(index, a, self.seed):
                self.assertEqual(verdict.jaccard, jaccard(a, index.sets[verdict.id_b]))


class ImagePipelineTest(SimpleTestCase):
    """Test cases for hash, index and verify over synthetic images."""

    def setUp(self):
        self.rng = np.random.default_rng(21)
        self.seed = 99

    def blocky_image(self):
        return np.kron(self.rng.random((8, 8)), np.ones((8, 8)))

    def ones_of(self, values):
        return ones_positions(compute_phash(LumaMatrix(values)))

    def test_pipeline_matches_all_pairs_scan(self):
        """Test flagged pairs against exact Jaccard over every pair"""
        bench_images = {f'bench-{i}': self.blocky_image() for i in range(40)}
        train_images = {f'fresh-{i}': self.blocky_image() for i in range(40)}
        for i in range(0, 40, 4):
            source = bench_images[f'bench-{i}']
            train_images[f'copy-{i}'] = source
            train_images[f'scaled-{i}'] = np.kron(source, np.ones((2, 2)))
            train_images[f'crop-{i}'] = source[1:-1, 1:-1]

        bench = {image_id: self.ones_of(values) for image_id, values in bench_images.items()}
        train = {image_id: self.ones_of(values) for image_id, values in train_images.items()}
        index = build_lsh_index(sorted(bench.items()), self.seed)

        flagged = {
            (train_id, verdict.id_b)
            for train_id, ones in train.items()
            for verdict in query_candidates(index, ones, self.seed, query_id=train_id)
            if verdict.is_duplicate
        }
        oracle = {
            (train_id, bench_id)
            for train_id, ones in train.items()
            for bench_id, other in bench.items()
            if jaccard(ones, other) > Fraction(95, 100)
        }
        self.assertEqual(flagged, oracle)
        self.assertTrue({(f'copy-{i}', f'bench-{i}') for i in range(0, 40, 4)} <= flagged)


class IndexStorageTest(SimpleTestCase):
    """Test cases for the KYDX1 index format."""

    def setUp(self):
        rng = np.random.default_rng(3)
        self.index = build_lsh_index(
            [(f'img-{i}', random_set(rng, 25)) for i in range(50)] + [('empty', OnesSet())],
            seed=11,
        )

    def test_round_trip(self):
        """Test that a loaded index answers queries like the original"""
        loaded = parse_index(dump_index(self.index))
        self.assertEqual(loaded.seed, self.index.seed)
        self.assertEqual(loaded.sets, self.index.sets)
        self.assertEqual(loaded.buckets, self.index.buckets)
        query = self.index.sets['img-7']
        self.assertEqual(query_candidates(loaded, query, 11), query_candidates(self.index, query, 11))

    def test_dump_is_deterministic(self):
        """Test that equal indexes serialize to equal bytes"""
        self.assertEqual(dump_index(self.index), dump_index(parse_index(dump_index(self.index))))

    def test_truncated_and_foreign_data_rejected(self):
        """Test format errors"""
        data = dump_index(self.index)
        with self.assertRaises(FormatError):
            parse_index(data[:-3])
        with self.assertRaises(FormatError):
            parse_index(b'XXXXX' + data[5:])
        with self.assertRaises(FormatError):
            parse_index(data + b'\0')


class ImageHashSerializerTest(SimpleTestCase):
    """Test cases for hash record validation."""

    def test_valid_record(self):
        """Test that ones are derived from the hash"""
        serializer = ImageHashSerializer(data={'id': 'a', 'phash': '000000000000000b'})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.validated_data['ones'].positions, (0, 1, 3))

    def test_mismatched_ones_rejected(self):
        """Test that a ones list must agree with the hash"""
        serializer = ImageHashSerializer(data={'id': 'a', 'phash': '000000000000000b', 'ones': [0, 1]})
        self.assertFalse(serializer.is_valid())
        self.assertIn('ones', serializer.errors)

    def test_bad_hex_rejected(self):
        """Test that a malformed hash is a field error"""
        serializer = ImageHashSerializer(data={'id': 'a', 'phash': 'not-a-hash-value'})
        self.assertFalse(serializer.is_valid())
        self.assertIn('phash', serializer.errors)
