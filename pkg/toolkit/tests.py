import io
import os
import tempfile
from unittest import mock

import numpy as np
from django.apps import apps
from django.test import SimpleTestCase, override_settings
from PIL import Image

from Keye_Curation.exceptions import ImageDecodeError
from dedup.serializers import ImageHashSerializer
from dedup.storage import load_index
from .cli import run
from .conf import curation_setting, worker_count
from .images import decode_image
from .jsonl import iter_jsonl, render_json, shard_of, write_jsonl
from .pool import bounded_map


class DecodeImageTest(SimpleTestCase):
    """Test cases for image decoding to luminance."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def save(self, name, color, size=(1, 1), mode='RGB'):
        path = os.path.join(self.tmp.name, name)
        Image.new(mode, size, color).save(path)
        return path

    def test_white_black_red(self):
        """Test the luminance weights on single pixels"""
        self.assertEqual(decode_image(self.save('white.png', (255, 255, 255))).values.tolist(), [[1.0]])
        self.assertEqual(decode_image(self.save('black.png', (0, 0, 0))).values.tolist(), [[0.0]])
        self.assertAlmostEqual(decode_image(self.save('red.png', (255, 0, 0))).values[0, 0], 0.299, places=9)

    def test_shape_is_rows_by_columns(self):
        """Test that the matrix is height x width"""
        luma = decode_image(self.save('wide.jpg', (10, 20, 30), size=(5, 3)))
        self.assertEqual((luma.rows, luma.cols), (3, 5))

    def test_other_modes(self):
        """Test grayscale and palette images"""
        self.assertEqual(decode_image(self.save('gray.png', 255, mode='L')).values.tolist(), [[1.0]])

    def test_corrupt_file(self):
        """Test that undecodable files carry their path"""
        path = os.path.join(self.tmp.name, 'broken.png')
        with open(path, 'wb') as f:
            f.write(b'not an image')
        with self.assertRaises(ImageDecodeError) as ctx:
            decode_image(path)
        self.assertEqual(ctx.exception.path, path)


class HelpersTest(SimpleTestCase):
    """Test cases for shared helpers."""

    def test_render_json_is_compact_and_strict(self):
        """Test deterministic JSON and NaN rejection"""
        self.assertEqual(render_json({'b': 1, 'a': [1.5, 'é']}), '{"b":1,"a":[1.5,"é"]}'.encode('utf-8'))
        with self.assertRaises(ValueError):
            render_json({'x': float('nan')})

    def test_shard_of_is_stable(self):
        """Test hash sharding"""
        self.assertEqual(shard_of('sample-1', 1), 0)
        shards = [shard_of(f'id-{i}', 4) for i in range(400)]
        self.assertEqual(shards, [shard_of(f'id-{i}', 4) for i in range(400)])
        self.assertEqual(set(shards), {0, 1, 2, 3})

    def test_bounded_map_keeps_order(self):
        """Test that results follow input order"""
        self.assertEqual(bounded_map(lambda x: x * x, range(50), workers=4), [x * x for x in range(50)])

    @override_settings(KEYE_CURATION={'SEED': 0, 'THREADS': 3})
    def test_worker_count(self):
        """Test the thread bound from settings and the environment"""
        with mock.patch.dict(os.environ, {}, clear=False):
            os.environ.pop('KYC_THREADS', None)
            self.assertEqual(worker_count(), 3)
            os.environ['KYC_THREADS'] = '7'
            self.assertEqual(worker_count(), 7)

    def test_no_auth_or_database_apps(self):
        """Test that serializers and rendering work with only DRF and the curation apps installed"""
        self.assertFalse(apps.is_installed('django.contrib.auth'))
        self.assertFalse(apps.is_installed('django.contrib.contenttypes'))
        self.assertEqual(set(curation_setting('DEDUP')), {'BANDS', 'ROWS_PER_BAND'})
        serializer = ImageHashSerializer(data={'id': 'a', 'phash': '0' * 16})
        self.assertTrue(serializer.is_valid(), serializer.errors)

    def test_iter_jsonl_reports_bad_lines(self):
        """Test that malformed lines go to the error callback"""
        with tempfile.NamedTemporaryFile('w', suffix='.jsonl', delete=False) as f:
            f.write('{"id": "a"}\n\nnot json\n[1]\n{"id": "b"}\n')
        self.addCleanup(os.unlink, f.name)
        errors = []
        records = list(iter_jsonl(f.name, errors.append))
        self.assertEqual(records, [(1, {'id': 'a'}), (5, {'id': 'b'})])
        self.assertEqual([e.line for e in errors], [3, 4])


class CliTest(SimpleTestCase):
    """Test cases for the batch entry point."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = self.tmp.name

    def path(self, name):
        return os.path.join(self.dir, name)

    def quiet_run(self, argv):
        with mock.patch('sys.stderr', new_callable=io.StringIO), mock.patch('sys.stdout', new_callable=io.StringIO):
            return run(argv)

    def test_usage_exit_codes(self):
        """Test missing, unknown and malformed subcommands"""
        self.assertEqual(self.quiet_run([]), 2)
        self.assertEqual(self.quiet_run(['--help']), 0)
        self.assertEqual(self.quiet_run(['launch']), 2)
        self.assertEqual(self.quiet_run(['hash']), 2)
        self.assertEqual(self.quiet_run(['hash', '--input', self.path('missing.jsonl'), '--output', 'x']), 2)
        self.assertEqual(self.quiet_run(['hash', '--input', 'x', '--output', 'y', '--shard-count', '2',
                                         '--shard-index', '2']), 2)
        write_jsonl(self.path('hashes.jsonl'), [])
        self.assertEqual(self.quiet_run([
            'index', '--hashes', self.path('hashes.jsonl'), '--output', self.path('x.kydx'), '--bands', '0',
        ]), 2)

    def write_images(self, count=12):
        rng = np.random.default_rng(15)
        os.mkdir(self.path('images'))
        records = []
        for i in range(count):
            pixels = (rng.random((24, 32, 3)) * 255).astype(np.uint8)
            Image.fromarray(pixels).save(self.path(f'images/{i}.png'))
            records.append({'id': f'img-{i}', 'path': f'images/{i}.png'})
        Image.fromarray(pixels).save(self.path('images/copy.png'))
        records.append({'id': 'img-copy', 'path': 'images/copy.png'})
        write_jsonl(self.path('images.jsonl'), records)

    def read(self, name):
        with open(self.path(name), 'rb') as f:
            return f.read()

    def test_hash_is_reproducible_and_shardable(self):
        """Test byte-identical reruns and shard completeness of the hash command"""
        self.write_images()
        argv = ['hash', '--input', self.path('images.jsonl'), '--output', self.path('hashes.jsonl')]
        self.assertEqual(self.quiet_run(argv), 0)
        first = self.read('hashes.jsonl')
        with mock.patch.dict(os.environ, {'KYC_THREADS': '1'}):
            self.assertEqual(self.quiet_run(argv), 0)
        self.assertEqual(self.read('hashes.jsonl'), first)

        lines = []
        for shard in range(3):
            self.assertEqual(self.quiet_run(argv + ['--shard-count', '3', '--shard-index', str(shard)]), 0)
            lines.extend(self.read('hashes.jsonl').splitlines())
        self.assertEqual(sorted(lines), sorted(first.splitlines()))


    def test_hash_reports_bad_images(self):
        """Test exit 1 with the remaining images still hashed"""
        self.write_images(count=2)
        with open(self.path('images/1.png'), 'wb') as f:
            f.write(b'garbage')
        with mock.patch('sys.stderr', new_callable=io.StringIO) as stderr, \
                mock.patch('sys.stdout', new_callable=io.StringIO):
            code = run(['hash', '--input', self.path('images.jsonl'), '--output', self.path('hashes.jsonl')])
        self.assertEqual(code, 1)
        self.assertIn('1.png:2 [img-1]', stderr.getvalue())
        ids = [r['id'] for _, r in iter_jsonl(self.path('hashes.jsonl'))]
        self.assertEqual(ids, ['img-0', 'img-copy'])

    def test_hash_index_dedup_pipeline(self):
        """Test hashing, indexing and scanning end to end"""
        self.write_images()
        self.assertEqual(self.quiet_run([
            'hash', '--input', self.path('images.jsonl'), '--output', self.path('hashes.jsonl'),
        ]), 0)
        hashes = [r for _, r in iter_jsonl(self.path('hashes.jsonl'))]
        write_jsonl(self.path('bench_hashes.jsonl'), [r for r in hashes if r['id'] == 'img-11'])
        write_jsonl(self.path('train_hashes.jsonl'), [r for r in hashes if r['id'] != 'img-11'])

        self.assertEqual(self.quiet_run([
            'index', '--hashes', self.path('bench_hashes.jsonl'), '--output', self.path('bench.kydx'), '--seed', '9',
        ]), 0)
        self.assertEqual(load_index(self.path('bench.kydx')).seed, 9)

        write_jsonl(self.path('train.jsonl'), [
            {'sample_id': 'leaky', 'image_ids': ['img-0', 'img-copy'], 'split': 'train', 'source': 'web'},
            {'sample_id': 'clean', 'image_ids': ['img-1', 'img-2'], 'split': 'train', 'source': 'web'},
        ])
        write_jsonl(self.path('bench.jsonl'), [
            {'sample_id': 'q', 'image_ids': ['img-11'], 'split': 'benchmark', 'benchmark_name': 'MMBench'},
        ])
        self.assertEqual(self.quiet_run([
            'dedup', '--train-manifest', self.path('train.jsonl'), '--train-hashes', self.path('train_hashes.jsonl'),
            '--index', self.path('bench.kydx'), '--bench-manifest', self.path('bench.jsonl'),
            '--flags-output', self.path('flags.jsonl'), '--report-output', self.path('report.json'),
            '--report-format', 'json',
        ]), 0)
        self.assertEqual(
            self.read('flags.jsonl'),
            b'{"sample_id":"leaky","benchmarks":["MMBench"],"images":["img-copy"]}\n'
        )
        self.assertEqual(
            self.read('report.json'),
            b'{"rows":[{"train_source":"web","benchmark":"MMBench","duplicates":1}],"totals":{"MMBench":1}}\n'
        )
