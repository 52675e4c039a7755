import os
import struct
import tempfile

import numpy as np
from django.test import SimpleTestCase

from Keye_Curation.exceptions import DataIntegrityError, FormatError, InvalidInputError
from toolkit.cli import run
from .merging import merge_average
from .params import ParamMap, load_param_map, read_param_map, save_param_map, write_param_map


class MergeAverageTest(SimpleTestCase):
    """Test cases for weight-space averaging."""

    def setUp(self):
        self.rng = np.random.default_rng(14)

    def random_model(self):
        return ParamMap({
            'embed.weight': self.rng.normal(size=(4, 3)),
            'head.bias': self.rng.normal(size=(3,)),
            'scale': self.rng.normal(size=()),
        })

    def test_uniform_mean(self):
        """Test the default arithmetic mean"""
        merged = merge_average([{'w': [2.0]}, {'w': [4.0]}])
        np.testing.assert_array_equal(merged['w'], [3.0])

    def test_weighted(self):
        """Test a convex combination with explicit weights"""
        merged = merge_average([{'w': [0.0]}, {'w': [8.0]}], [0.25, 0.75])
        np.testing.assert_array_equal(merged['w'], [6.0])

    def test_weights_normalized(self):
        """Test that weights are scaled to sum to one"""
        merged = merge_average([{'w': [0.0]}, {'w': [8.0]}], [1, 3])
        np.testing.assert_array_equal(merged['w'], [6.0])

    def test_identical_models(self):
        """Test idempotence on identical inputs"""
        model = self.random_model()
        merged = merge_average([model] * 3)
        for name in model:
            np.testing.assert_array_equal(merged[name], model[name])

    def test_permutation_invariance(self):
        """Test that reordering (model, weight) pairs does not change the result"""
        models = [self.random_model() for _ in range(4)]
        weights = [0.1, 0.2, 0.3, 0.4]
        merged = merge_average(models, weights)
        for order in ([3, 1, 0, 2], [2, 3, 1, 0]):
            other = merge_average([models[i] for i in order], [weights[i] for i in order])
            for name in merged:
                np.testing.assert_array_equal(other[name], merged[name])

    def test_convexity(self):
        """Test that every entry lies within the input range"""
        models = [self.random_model() for _ in range(5)]
        merged = merge_average(models, self.rng.random(5))
        for name in merged:
            stack = np.stack([m[name] for m in models])
            self.assertTrue(np.all(merged[name] >= stack.min(axis=0)))
            self.assertTrue(np.all(merged[name] <= stack.max(axis=0)))

    def test_name_mismatch_lists_difference(self):
        """Test that differing parameter names are reported"""
        with self.assertRaises(InvalidInputError) as ctx:
            merge_average([{'a': [1.0], 'b': [1.0]}, {'a': [1.0], 'c': [1.0]}])
        self.assertIn('b, c', str(ctx.exception))

    def test_shape_mismatch_names_parameter(self):
        """Test that differing shapes are reported by name"""
        with self.assertRaises(InvalidInputError) as ctx:
            merge_average([{'w': [1.0, 2.0]}, {'w': [1.0]}])
        self.assertIn("'w'", str(ctx.exception))

    def test_invalid_inputs(self):
        """Test NaN values, empty input and bad weights"""
        with self.assertRaises(InvalidInputError):
            merge_average([{'w': [float('nan')]}])
        with self.assertRaises(InvalidInputError):
            merge_average([])
        with self.assertRaises(InvalidInputError):
            merge_average([{'w': [1.0]}, {'w': [2.0]}], [0, 0])
        with self.assertRaises(InvalidInputError):
            merge_average([{'w': [1.0]}, {'w': [2.0]}], [-1, 2])


class ParamContainerTest(SimpleTestCase):
    """Test cases for the flat checkpoint container."""

    def setUp(self):
        self.params = ParamMap({
            'z.weight': np.arange(6, dtype=np.float32).reshape(2, 3),
            'a.bias': np.array([0.5, -1.5], dtype=np.float32),
            'scalar': np.float32(2.0),
        })

    def test_round_trip(self):
        """Test load(save(p)) for float32 values"""
        loaded = load_param_map(save_param_map(self.params))
        self.assertEqual(sorted(loaded), sorted(self.params))
        for name in self.params:
            np.testing.assert_array_equal(loaded[name], self.params[name])
            self.assertEqual(loaded[name].shape, self.params[name].shape)

    def test_layout(self):
        """Test the header and sorted entry order"""
        data = save_param_map(self.params)
        self.assertEqual(struct.unpack_from('<I', data)[0], 3)
        self.assertEqual(struct.unpack_from('<H', data, 4)[0], len('a.bias'))
        self.assertEqual(data[6:12], b'a.bias')
        self.assertEqual(data[12:14], bytes([1, 1]))

    def test_malformed(self):
        """Test truncation, trailing bytes, dtype tags and NaN payloads"""
        data = save_param_map(self.params)
        with self.assertRaises(FormatError):
            load_param_map(data[:-1])
        with self.assertRaises(FormatError):
            load_param_map(data + b'\0')
        with self.assertRaises(FormatError):
            load_param_map(data[:12] + bytes([2]) + data[13:])
        nan = struct.pack('<IH', 1, 1) + b'w' + bytes([1, 1]) + struct.pack('<I', 1) + struct.pack('<f', float('nan'))
        with self.assertRaises(DataIntegrityError):
            load_param_map(nan)


class MergeCommandTest(SimpleTestCase):
    """Test cases for the merge command."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def test_merge_files(self):
        """Test a weighted merge of two container files"""
        write_param_map(self.path('a.kyp'), ParamMap({'w': [0.0, 4.0]}))
        write_param_map(self.path('b.kyp'), ParamMap({'w': [8.0, 4.0]}))
        code = run([
            'merge', '--inputs', self.path('a.kyp'), self.path('b.kyp'),
            '--weights', '0.25', '0.75', '--output', self.path('out.kyp'),
        ])
        self.assertEqual(code, 0)
        np.testing.assert_array_equal(read_param_map(self.path('out.kyp'))['w'], [6.0, 4.0])

    def test_weight_count_mismatch_is_usage_error(self):
        """Test exit 2 when weights and inputs disagree"""
        write_param_map(self.path('a.kyp'), ParamMap({'w': [0.0]}))
        code = run(['merge', '--inputs', self.path('a.kyp'), '--weights', '1', '2', '--output', self.path('o.kyp')])
        self.assertEqual(code, 2)

    def test_structure_mismatch_is_data_error(self):
        """Test exit 1 when parameter names differ"""
        write_param_map(self.path('a.kyp'), ParamMap({'w': [0.0]}))
        write_param_map(self.path('b.kyp'), ParamMap({'v': [0.0]}))
        code = run(['merge', '--inputs', self.path('a.kyp'), self.path('b.kyp'), '--output', self.path('o.kyp')])
        self.assertEqual(code, 1)
