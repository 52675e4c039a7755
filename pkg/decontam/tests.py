import os
import tempfile
from fractions import Fraction

import numpy as np
from django.test import SimpleTestCase

from Keye_Curation.exceptions import DataIntegrityError, FormatError, InvalidInputError
from dedup.hashing import OnesSet, PHash64
from dedup.minhash import build_lsh_index, jaccard
from dedup.serializers import hash_record
from dedup.storage import save_index
from toolkit.cli import run
from toolkit.jsonl import iter_jsonl, write_jsonl
from .records import EmbeddingRecord, SampleManifestEntry, dump_embeddings, parse_embeddings, write_embeddings_binary
from .reports import LeakageReport, emit_report
from .scans import (
    UNATTRIBUTED, benchmark_lookup, filter_pair_score, match_images, scan_embedding_leakage, scan_hash_leakage,
)

SEED = 5


def random_set(rng, size=50):
    return OnesSet(tuple(sorted(int(x) for x in rng.choice(64, size=size, replace=False))))


def unit(*values):
    vec = np.array(values, dtype=np.float64)
    return vec / np.linalg.norm(vec)


class HashLeakageTest(SimpleTestCase):
    """Test cases for the benchmark hash scan and the whole-sample rule."""

    def setUp(self):
        self.rng = np.random.default_rng(17)
        self.bench_sets = {f'bench-{i}': random_set(self.rng) for i in range(20)}
        self.bench_index = build_lsh_index(sorted(self.bench_sets.items()), SEED)
        self.bench_entries = [
            SampleManifestEntry(f'b1-q{i}', [f'bench-{i}'], 'benchmark', 'b1') for i in range(10)
        ] + [
            SampleManifestEntry(f'b2-q{i}', [f'bench-{i}'], 'benchmark', 'b2') for i in range(10, 20)
        ]

    def near_copy(self, bench_id):
        return OnesSet(self.bench_sets[bench_id].positions[1:])

    def test_no_collisions(self):
        """Test that a clean corpus gives no flags and an empty report"""
        hashes = {f'img-{i}': random_set(self.rng, 8) for i in range(6)}
        train = [SampleManifestEntry(f's{i}', [f'img-{i}']) for i in range(6)]
        flagged, report = scan_hash_leakage(train, hashes, self.bench_index, SEED)
        self.assertEqual(flagged, set())
        self.assertEqual(report.rows, [])

    def test_one_flagged_image_flags_whole_sample(self):
        """Test that a 3-image sample is dropped when one image leaks"""
        hashes = {
            'a': random_set(self.rng, 8),
            'b': self.near_copy('bench-3'),
            'c': random_set(self.rng, 8),
        }
        train = [SampleManifestEntry('multi', ['a', 'b', 'c'])]
        flagged, _ = scan_hash_leakage(train, hashes, self.bench_index, SEED)
        self.assertEqual(flagged, {'multi'})

        hashes['b'] = random_set(self.rng, 8)
        flagged, _ = scan_hash_leakage(train, hashes, self.bench_index, SEED)
        self.assertEqual(flagged, set())

    def test_planted_duplicates_counted_per_benchmark(self):
        """Test report counts against planted duplicates"""
        hashes, train = {}, []
        planted = ['bench-0', 'bench-2', 'bench-4', 'bench-6', 'bench-11', 'bench-13', 'bench-15']
        for i, bench_id in enumerate(planted):
            hashes[f'dup-{i}'] = self.near_copy(bench_id)
            train.append(SampleManifestEntry(f'sample-dup-{i}', [f'dup-{i}']))
        for i in range(30):
            hashes[f'clean-{i}'] = random_set(self.rng, 10)
            train.append(SampleManifestEntry(f'sample-clean-{i}', [f'clean-{i}']))

        flagged, report = scan_hash_leakage(
            train, hashes, self.bench_index, SEED, benchmark_lookup(self.bench_entries)
        )
        self.assertEqual(flagged, {f'sample-dup-{i}' for i in range(7)})
        self.assertEqual(report.totals, {'b1': 4, 'b2': 3})

    def test_whole_sample_rule_on_random_manifests(self):
        """Test flags against an exact scan over random multi-image samples"""
        hashes, train = {}, []
        for s in range(150):
            image_ids = []
            for j in range(int(self.rng.integers(1, 5))):
                image_id = f's{s}-{j}'
                if self.rng.random() < 0.1:
                    hashes[image_id] = self.near_copy(f'bench-{int(self.rng.integers(20))}')
                else:
                    hashes[image_id] = random_set(self.rng, int(self.rng.integers(5, 40)))
                image_ids.append(image_id)
            train.append(SampleManifestEntry(f'sample-{s}', image_ids))

        leaked = {
            image_id for image_id, ones in hashes.items()
            if any(jaccard(ones, bench) > Fraction(95, 100) for bench in self.bench_sets.values())
        }
        expected = {entry.sample_id for entry in train if leaked.intersection(entry.image_ids)}
        flagged, report = scan_hash_leakage(train, hashes, self.bench_index, SEED)
        self.assertTrue(expected)
        self.assertEqual(flagged, expected)
        self.assertEqual(report.rows, [('train', UNATTRIBUTED, len(expected))])

    def test_threaded_matching_is_deterministic(self):
        """Test that parallel queries give the serial result"""
        hashes = {f'img-{i}': random_set(self.rng, 30) for i in range(40)}
        hashes.update({f'dup-{i}': self.near_copy(f'bench-{i}') for i in range(0, 20, 3)})
        lookup = benchmark_lookup(self.bench_entries)
        serial = match_images(list(hashes), hashes, self.bench_index, SEED, lookup)
        self.assertEqual(match_images(list(hashes), hashes, self.bench_index, SEED, lookup, workers=4), serial)
        self.assertEqual(set(serial), {f'dup-{i}' for i in range(0, 20, 3)})

    def test_unattributed_hits(self):
        """Test hits without a benchmark manifest"""
        hashes = {'x': self.near_copy('bench-1')}
        _, report = scan_hash_leakage([SampleManifestEntry('s', ['x'])], hashes, self.bench_index, SEED)
        self.assertEqual(report.rows, [('train', UNATTRIBUTED, 1)])

    def test_missing_hash_is_data_error(self):
        """Test that every train image needs a hash"""
        with self.assertRaises(DataIntegrityError):
            scan_hash_leakage([SampleManifestEntry('s', ['nope'])], {}, self.bench_index, SEED)


class EmbeddingLeakageTest(SimpleTestCase):
    """Test cases for the dual-threshold embedding scan."""

    def setUp(self):
        self.bench = [EmbeddingRecord('q', unit(1, 0), unit(1, 0))]

    def test_identical_record_flagged(self):
        """Test that an exact copy is flagged"""
        train = [EmbeddingRecord('t', unit(1, 0), unit(1, 0))]
        self.assertEqual(scan_embedding_leakage(train, self.bench), {'t'})

    def test_text_below_threshold_not_flagged(self):
        """Test AND semantics with image 0.99 and text 0.40"""
        train = [EmbeddingRecord('t', unit(0.99, np.sqrt(1 - 0.99 ** 2)), unit(0.40, np.sqrt(1 - 0.16)))]
        self.assertEqual(scan_embedding_leakage(train, self.bench), set())
        self.assertEqual(scan_embedding_leakage(train, self.bench, mode='or'), {'t'})

    def test_orthogonal_images_not_flagged(self):
        """Test that orthogonal image vectors never match"""
        train = [EmbeddingRecord('t', unit(0, 1), unit(1, 0))]
        self.assertEqual(scan_embedding_leakage(train, self.bench), set())

    def test_threshold_is_strict(self):
        """Test that a cosine equal to the threshold is not flagged"""
        train = [EmbeddingRecord('t', unit(1, 0), unit(1, 0))]
        self.assertEqual(scan_embedding_leakage(train, self.bench, image_threshold=1.0), set())

    def test_unnormalized_vectors_rejected(self):
        """Test the unit-norm precondition"""
        train = [EmbeddingRecord('t', np.array([2.0, 0.0]), unit(1, 0))]
        with self.assertRaises(InvalidInputError):
            scan_embedding_leakage(train, self.bench)

    def test_binary_round_trip(self):
        """Test the KYEM1 embedding container"""
        records = [EmbeddingRecord('a', unit(1, 2), unit(3, 4)), EmbeddingRecord('é', unit(0, 1), unit(1, 0))]
        loaded = parse_embeddings(dump_embeddings(records))
        self.assertEqual([r.id for r in loaded], ['a', 'é'])
        np.testing.assert_allclose(loaded[0].image_vec, records[0].image_vec, rtol=1e-6)
        with self.assertRaises(FormatError):
            parse_embeddings(dump_embeddings(records)[:-1])
        with self.assertRaises(FormatError):
            dump_embeddings([EmbeddingRecord('x' * 70000, unit(1, 0), unit(0, 1))])


class PairScoreTest(SimpleTestCase):
    """Test cases for the pair score filter."""

    def test_threshold(self):
        """Test the strict inequality at 0.9"""
        kept, dropped = filter_pair_score([('a', 0.95), ('b', 0.9), ('c', 0.1)])
        self.assertEqual(kept, ['a'])
        self.assertEqual(dropped, ['b', 'c'])

    def test_empty(self):
        """Test empty input"""
        self.assertEqual(filter_pair_score([]), ([], []))

    def test_nan_rejected(self):
        """Test that scores must be finite"""
        with self.assertRaises(InvalidInputError):
            filter_pair_score([('a', float('nan'))])


class LeakageReportTest(SimpleTestCase):
    """Test cases for report rendering."""

    def test_empty_report_is_header_only(self):
        """Test CSV of an empty report"""
        self.assertEqual(emit_report(LeakageReport()), b'train_source,benchmark,duplicates\n')

    def test_single_row(self):
        """Test a single data line"""
        report = LeakageReport()
        report.add('srcA', 'MMBench', 12)
        self.assertEqual(emit_report(report).decode().splitlines()[1:], ['srcA,MMBench,12'])

    def test_totals_line(self):
        """Test that two sources for one benchmark get a TOTAL row"""
        report = LeakageReport()
        report.add('srcB', 'MMBench', 5)
        report.add('srcA', 'MMBench', 12)
        report.add('srcA', 'MathVista', 1)
        self.assertEqual(emit_report(report).decode().splitlines(), [
            'train_source,benchmark,duplicates',
            'srcA,MMBench,12',
            'srcA,MathVista,1',
            'srcB,MMBench,5',
            'TOTAL,MMBench,17',
        ])

    def test_json_format(self):
        """Test the JSON rendering"""
        report = LeakageReport({('srcA', 'MMBench'): 2})
        self.assertEqual(
            emit_report(report, 'json'),
            b'{"rows":[{"train_source":"srcA","benchmark":"MMBench","duplicates":2}],"totals":{"MMBench":2}}\n'
        )

    def test_merge(self):
        """Test combining shard reports"""
        a = LeakageReport({('s', 'b1'): 1})
        b = LeakageReport({('s', 'b1'): 2, ('t', 'b2'): 1})
        self.assertEqual(a.merge(b).counts, {('s', 'b1'): 3, ('t', 'b2'): 1})
        self.assertEqual(a.merge(b).counts, b.merge(a).counts)


class DecontamCommandTest(SimpleTestCase):
    """Test cases for the dedup, decontam-embed and filter-pairs commands."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = self.tmp.name

    def path(self, name):
        return os.path.join(self.dir, name)

    def read(self, name):
        with open(self.path(name), 'rb') as f:
            return f.read()

    def write_corpus(self, train_hashes):
        index = build_lsh_index([('bench-a', OnesSet.from_mask(0xFFFF0000FFFF0000))], SEED)
        save_index(index, self.path('bench.kydx'))
        write_jsonl(self.path('bench.jsonl'), [
            {'sample_id': 'q1', 'image_ids': ['bench-a'], 'split': 'benchmark', 'benchmark_name': 'MMBench'},
        ])
        write_jsonl(self.path('hashes.jsonl'), [hash_record(i, PHash64(h)) for i, h in train_hashes.items()])
        write_jsonl(self.path('train.jsonl'), [
            {'sample_id': f's-{image_id}', 'image_ids': [image_id], 'split': 'train'} for image_id in train_hashes
        ])

    def run_dedup(self, *extra):
        return run([
            'dedup',
            '--train-manifest', self.path('train.jsonl'),
            '--train-hashes', self.path('hashes.jsonl'),
            '--index', self.path('bench.kydx'),
            '--bench-manifest', self.path('bench.jsonl'),
            '--flags-output', self.path('flags.jsonl'),
            '--report-output', self.path('report.csv'),
            *extra,
        ])

    def test_dedup_without_collisions(self):
        """Test exit 0 with an empty flag file and report"""
        self.write_corpus({'img-1': 0x1, 'img-2': 0x0F})
        self.assertEqual(self.run_dedup(), 0)
        self.assertEqual(self.read('flags.jsonl'), b'')
        self.assertEqual(self.read('report.csv'), b'train_source,benchmark,duplicates\n')

    def test_dedup_flags_leaked_sample(self):
        """Test that a copied benchmark image is flagged and attributed"""
        self.write_corpus({'img-1': 0xFFFF0000FFFF0000, 'img-2': 0x0F})
        self.assertEqual(self.run_dedup(), 0)
        self.assertEqual(
            self.read('flags.jsonl'),
            b'{"sample_id":"s-img-1","benchmarks":["MMBench"],"images":["img-1"]}\n'
        )
        self.assertEqual(
            self.read('report.csv'),
            b'train_source,benchmark,duplicates\ntrain,MMBench,1\n'
        )

    def test_dedup_is_reproducible_and_shards_partition(self):
        """Test byte-identical reruns and shard completeness"""
        hashes = {f'img-{i}': (0xFFFF0000FFFF0000 if i % 3 == 0 else i) for i in range(12)}
        self.write_corpus(hashes)
        self.assertEqual(self.run_dedup(), 0)
        full = self.read('flags.jsonl')
        self.assertEqual(self.run_dedup(), 0)
        self.assertEqual(self.read('flags.jsonl'), full)

        lines = []
        for shard in range(3):
            self.assertEqual(self.run_dedup('--shard-count', '3', '--shard-index', str(shard)), 0)
            lines.extend(self.read('flags.jsonl').splitlines())
        self.assertEqual(sorted(lines), sorted(full.splitlines()))

    def test_missing_hash_exits_with_data_error(self):
        """Test exit 1 when a train image has no hash"""
        self.write_corpus({'img-1': 0x1})
        with open(self.path('train.jsonl'), 'a') as f:
            f.write('{"sample_id": "orphan", "image_ids": ["nope"], "split": "train"}\n')
        self.assertEqual(self.run_dedup(), 1)

    def test_duplicate_hash_id_is_data_error(self):
        """Test exit 1 when a train image id is hashed twice"""
        self.write_corpus({'img-1': 0x1, 'img-2': 0x0F})
        write_jsonl(self.path('hashes.jsonl'), [
            hash_record('img-1', PHash64(0x1)),
            hash_record('img-2', PHash64(0x0F)),
            hash_record('img-1', PHash64(0xFFFF0000FFFF0000)),
        ])
        self.assertEqual(self.run_dedup(), 1)
        self.assertEqual(self.read('flags.jsonl'), b'')

    def test_missing_input_is_usage_error(self):
        """Test exit 2 for a missing input file"""
        self.assertEqual(self.run_dedup(), 2)

    def test_decontam_embed(self):
        """Test the embedding scan over a KYEM1 benchmark file"""
        write_embeddings_binary(self.path('bench.kyem'), [EmbeddingRecord('q', unit(1, 0), unit(1, 0))])
        write_jsonl(self.path('train.jsonl'), [
            {'id': 'copy', 'image_vec': [1.0, 0.0], 'text_vec': [1.0, 0.0]},
            {'id': 'other', 'image_vec': [0.0, 1.0], 'text_vec': [1.0, 0.0]},
        ])
        code = run([
            'decontam-embed', '--train', self.path('train.jsonl'), '--bench', self.path('bench.kyem'),
            '--output', self.path('flags.jsonl'),
        ])
        self.assertEqual(code, 0)
        self.assertEqual(self.read('flags.jsonl'), b'{"id":"copy"}\n')

    def test_filter_pairs(self):
        """Test the pair score filter command and NaN rejection"""
        with open(self.path('scores.jsonl'), 'w') as f:
            f.write('{"id": "a", "score": 0.95}\n{"id": "b", "score": 0.9}\n{"id": "c", "score": NaN}\n')
        code = run([
            'filter-pairs', '--input', self.path('scores.jsonl'),
            '--kept', self.path('kept.jsonl'), '--dropped', self.path('dropped.jsonl'),
        ])
        self.assertEqual(code, 1)
        self.assertEqual([r['id'] for _, r in iter_jsonl(self.path('kept.jsonl'))], ['a'])
        self.assertEqual([r['id'] for _, r in iter_jsonl(self.path('dropped.jsonl'))], ['b'])
