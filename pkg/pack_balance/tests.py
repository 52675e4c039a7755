import os
import tempfile
from itertools import islice, product

import numpy as np
from django.test import SimpleTestCase
from rest_framework.utils import json

from Keye_Curation.exceptions import ConfigurationError, CorruptionError, DataIntegrityError, FormatError, InvalidInputError
from toolkit.cli import run
from toolkit.jsonl import write_jsonl
from .cursor import (
    CURSOR_SIZE, ResumeCursor, ShardedSampleStream, load_cursor, read_cursor, save_cursor, write_cursor_atomic,
)
from .scheduling import WorkItem, balance_greedy, estimate_cost, pack_ffd


def items_from(costs):
    return [WorkItem(f'item-{i:02d}', max(1, int(cost)), float(cost)) for i, cost in enumerate(costs)]


def optimal_makespan(costs, m):
    best = None
    for assignment in product(range(m), repeat=len(costs)):
        loads = [0] * m
        for cost, group in zip(costs, assignment):
            loads[group] += cost
        best = max(loads) if best is None else min(best, max(loads))
    return best


def optimal_bin_count(sizes, capacity):
    sizes = sorted(sizes, reverse=True)
    best = [len(sizes)]

    def place(i, loads):
        if len(loads) >= best[0]:
            return
        if i == len(sizes):
            best[0] = len(loads)
            return
        tried = set()
        for b, load in enumerate(loads):
            if load + sizes[i] <= capacity and load not in tried:
                tried.add(load)
                loads[b] += sizes[i]
                place(i + 1, loads)
                loads[b] -= sizes[i]
        loads.append(sizes[i])
        place(i + 1, loads)
        loads.pop()

    place(0, [])
    return best[0]


class CostModelTest(SimpleTestCase):
    """Test cases for the FLOPs proxy."""

    def test_examples(self):
        """Test linear and attention-aware costs"""
        self.assertEqual(estimate_cost(100, 'linear'), 100)
        self.assertEqual(estimate_cost(100, 'quadratic', 1000), 110)
        self.assertEqual(estimate_cost(1, 'linear'), 1)

    def test_quadratic_needs_context(self):
        """Test that zero and negative context lengths are rejected"""
        with self.assertRaises(ConfigurationError):
            estimate_cost(100, 'quadratic', 0)
        with self.assertRaises(ConfigurationError):
            estimate_cost(100, 'quadratic', -5)

    def test_work_item_validation(self):
        """Test token and cost validation"""
        self.assertEqual(WorkItem('a', 7).cost, 7.0)
        with self.assertRaises(InvalidInputError):
            WorkItem('a', 0)
        with self.assertRaises(InvalidInputError):
            WorkItem('a', 5, float('nan'))


class BalanceGreedyTest(SimpleTestCase):
    """Test cases for longest-processing-time balancing."""

    def test_textbook_instance(self):
        """Test costs [5,4,3,3,3] on two groups"""
        result = balance_greedy(items_from([5, 4, 3, 3, 3]), 2)
        self.assertEqual(sorted(result.loads), [8, 10])
        self.assertEqual(result.makespan, 10)
        self.assertEqual(optimal_makespan([5, 4, 3, 3, 3], 2), 9)

    def test_single_group(self):
        """Test that one group takes everything"""
        result = balance_greedy(items_from([3, 1, 4, 1, 5]), 1)
        self.assertEqual(result.loads, [14])

    def test_one_item_per_group(self):
        """Test n = m equal costs"""
        result = balance_greedy(items_from([2, 2, 2, 2]), 4)
        self.assertEqual(result.loads, [2, 2, 2, 2])
        self.assertEqual(sorted(result.assignment.values()), [0, 1, 2, 3])

    def test_no_groups(self):
        """Test that m must be positive"""
        with self.assertRaises(ConfigurationError):
            balance_greedy(items_from([1]), 0)

    def test_deterministic_ties(self):
        """Test that equal costs are placed by id"""
        result = balance_greedy([WorkItem('b', 1), WorkItem('a', 1), WorkItem('c', 1)], 2)
        self.assertEqual(result.assignment, {'a': 0, 'b': 1, 'c': 0})

    def test_lpt_bound(self):
        """Test the 4/3 - 1/(3m) bound against brute force"""
        rng = np.random.default_rng(12)
        for _ in range(150):
            m = int(rng.integers(1, 5))
            n = int(rng.integers(1, 10 if m > 2 else 12))
            costs = [int(c) for c in rng.integers(1, 30, size=n)]
            result = balance_greedy(items_from(costs), m)
            self.assertEqual(sum(result.loads), sum(costs))
            optimal = optimal_makespan(costs, m)
            self.assertLessEqual(result.makespan, (4 / 3 - 1 / (3 * m)) * optimal + 1e-9)


class PackFfdTest(SimpleTestCase):
    """Test cases for first-fit-decreasing packing."""

    def test_textbook_instance(self):
        """Test lengths [7,5,4,3,1] with capacity 8"""
        plan = pack_ffd(items_from([7, 5, 4, 3, 1]), 8)
        self.assertEqual(plan.bins, [
            (['item-00', 'item-04'], 8),
            (['item-01', 'item-03'], 8),
            (['item-02'], 4),
        ])

    def test_single_item(self):
        """Test that one item makes one bin"""
        self.assertEqual(len(pack_ffd(items_from([5]), 8).bins), 1)

    def test_full_items(self):
        """Test that capacity-sized items get a bin each"""
        self.assertEqual(pack_ffd(items_from([8, 8, 8]), 8).fills, [8, 8, 8])

    def test_oversize_item_named(self):
        """Test that an item larger than a bin is reported by id"""
        with self.assertRaises(InvalidInputError) as ctx:
            pack_ffd(items_from([3, 9]), 8)
        self.assertEqual(ctx.exception.record_id, 'item-01')

    def test_every_item_packed_once(self):
        """Test conservation and capacity over random instances"""
        rng = np.random.default_rng(13)
        for _ in range(100):
            costs = [int(c) for c in rng.integers(1, 50, size=int(rng.integers(1, 40)))]
            plan = pack_ffd(items_from(costs), 50)
            ids = [item_id for items, _ in plan.bins for item_id in items]
            self.assertEqual(sorted(ids), sorted(f'item-{i:02d}' for i in range(len(costs))))
            self.assertTrue(all(fill <= 50 for fill in plan.fills))
            self.assertLessEqual(len(plan.bins), 2 * sum(costs) / 50 + 1)

    def test_ffd_bound_against_brute_force(self):
        """Test bins <= 11/9 OPT + 1 on small random instances"""
        rng = np.random.default_rng(15)
        for _ in range(150):
            sizes = [int(c) for c in rng.integers(1, 21, size=int(rng.integers(1, 11)))]
            plan = pack_ffd(items_from(sizes), 20)
            self.assertLessEqual(len(plan.bins), 11 / 9 * optimal_bin_count(sizes, 20) + 1)


class CursorTest(SimpleTestCase):
    """Test cases for the KYCR1 resume cursor."""

    def setUp(self):
        self.cursor = ResumeCursor(epoch=2, shard_index=1, sample_offset=345, shuffle_seed=-7)

    def test_round_trip(self):
        """Test load(save(c)) == c"""
        data = save_cursor(self.cursor)
        self.assertEqual(len(data), CURSOR_SIZE)
        self.assertEqual(load_cursor(data), self.cursor)

    def test_any_flipped_byte_detected(self):
        """Test that every single-byte corruption fails the checksum"""
        data = save_cursor(self.cursor)
        for position in range(len(data)):
            corrupted = bytearray(data)
            corrupted[position] ^= 0x40
            with self.assertRaises(CorruptionError):
                load_cursor(bytes(corrupted))

    def test_truncated(self):
        """Test that short input is a format error"""
        with self.assertRaises(FormatError):
            load_cursor(save_cursor(self.cursor)[:-1])

    def test_atomic_write(self):
        """Test writing and reading a cursor file"""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'run.cursor')
            write_cursor_atomic(path, self.cursor)
            write_cursor_atomic(path, ResumeCursor(shuffle_seed=1))
            self.assertEqual(read_cursor(path), ResumeCursor(shuffle_seed=1))
            self.assertEqual(os.listdir(tmp), ['run.cursor'])

    def test_field_ranges(self):
        """Test that fields outside the u64 and i64 ranges are rejected before encoding"""
        edge = ResumeCursor(epoch=2 ** 64 - 1, shard_index=2 ** 64 - 1, sample_offset=2 ** 64 - 1, shuffle_seed=-2 ** 63)
        self.assertEqual(load_cursor(save_cursor(edge)), edge)
        for fields in ({'epoch': 2 ** 64}, {'shard_index': 2 ** 64}, {'sample_offset': 2 ** 70},
                       {'sample_offset': -1}, {'shuffle_seed': 2 ** 63}, {'shuffle_seed': -2 ** 63 - 1}):
            with self.assertRaises(ConfigurationError):
                ResumeCursor(**fields)


class ShardedStreamTest(SimpleTestCase):
    """Test cases for deterministic replay from a cursor."""

    def setUp(self):
        self.shards = [[f's{s}-{i}' for i in range(size)] for s, size in enumerate((3000, 4100, 2500))]
        self.stream = ShardedSampleStream(self.shards, shuffle_seed=77)

    def test_epoch_covers_every_sample(self):
        """Test that one epoch is a permutation of all samples"""
        epoch = list(islice(iter(self.stream), 9600))
        self.assertEqual(sorted(epoch), sorted(s for shard in self.shards for s in shard))

    def test_resume_matches_uninterrupted_stream(self):
        """Test resuming after global sample 12345"""
        uninterrupted = list(islice(iter(self.stream), 12400))
        consumed = list(islice(self.stream.iter_from(), 12345))
        cursor = load_cursor(save_cursor(consumed[-1][1]))

        resumed = ShardedSampleStream(self.shards, shuffle_seed=77)
        sample, _ = next(resumed.iter_from(cursor))
        self.assertEqual(sample, uninterrupted[12345])
        self.assertEqual(
            [s for s, _ in islice(resumed.iter_from(cursor), 55)], uninterrupted[12345:]
        )

    def test_epochs_reshuffle(self):
        """Test that each epoch has its own order"""
        first = self.stream.order(0, 0)
        self.assertNotEqual(first, self.stream.order(1, 0))
        self.assertEqual(first, ShardedSampleStream(self.shards, 77).order(0, 0))

    def test_finite_epochs(self):
        """Test that a bounded stream stops"""
        stream = ShardedSampleStream([['a', 'b'], [], ['c']], shuffle_seed=1, epochs=2)
        self.assertEqual(len(list(stream)), 6)

    def test_cursor_validation(self):
        """Test seed mismatch and out-of-range positions"""
        with self.assertRaises(ConfigurationError):
            next(self.stream.iter_from(ResumeCursor(shuffle_seed=78)))
        with self.assertRaises(DataIntegrityError):
            next(self.stream.iter_from(ResumeCursor(shard_index=0, sample_offset=3001, shuffle_seed=77)))
        with self.assertRaises(DataIntegrityError):
            next(self.stream.iter_from(ResumeCursor(shard_index=4, shuffle_seed=77)))


class PackBalanceCommandTest(SimpleTestCase):
    """Test cases for the pack, balance and cursor commands."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def read_json(self, name):
        with open(self.path(name), 'rb') as f:
            return json.loads(f.read())

    def test_pack(self):
        """Test the pack plan output"""
        write_jsonl(self.path('items.jsonl'), [{'id': f'x{t}', 'tokens': t} for t in (7, 5, 4, 3, 1)])
        code = run(['pack', '--input', self.path('items.jsonl'), '--capacity', '8', '--output', self.path('plan.json')])
        self.assertEqual(code, 0)
        plan = self.read_json('plan.json')
        self.assertEqual([b['items'] for b in plan['bins']], [['x7', 'x1'], ['x5', 'x3'], ['x4']])

    def test_pack_oversize_is_data_error(self):
        """Test exit 1 when an item exceeds the capacity"""
        write_jsonl(self.path('items.jsonl'), [{'id': 'big', 'tokens': 9}])
        code = run(['pack', '--input', self.path('items.jsonl'), '--capacity', '8', '--output', self.path('plan.json')])
        self.assertEqual(code, 1)

    def test_balance_quadratic(self):
        """Test balancing with attention-aware costs"""
        write_jsonl(self.path('items.jsonl'), [{'id': f'x{t}', 'tokens': t} for t in (100, 50, 50)])
        code = run([
            'balance', '--input', self.path('items.jsonl'), '--groups', '2',
            '--cost-mode', 'quadratic', '--ctx', '1000', '--output', self.path('groups.json'),
        ])
        self.assertEqual(code, 0)
        result = self.read_json('groups.json')
        self.assertEqual(sorted(result['loads']), [105.0, 110.0])
        self.assertEqual(result['makespan'], 110.0)

    def test_balance_zero_groups_is_usage_error(self):
        """Test exit 2 for --groups 0"""
        write_jsonl(self.path('items.jsonl'), [{'id': 'a', 'tokens': 1}])
        self.assertEqual(run(['balance', '--input', self.path('items.jsonl'), '--groups', '0']), 2)

    def test_explicit_zero_options_are_not_replaced_by_defaults(self):
        """Test that --capacity 0 and --ctx 0 are rejected instead of falling back to settings"""
        write_jsonl(self.path('items.jsonl'), [{'id': 'a', 'tokens': 1}])
        self.assertEqual(run(['pack', '--input', self.path('items.jsonl'), '--capacity', '0']), 2)
        self.assertEqual(run([
            'balance', '--input', self.path('items.jsonl'), '--groups', '1',
            '--cost-mode', 'quadratic', '--ctx', '0',
        ]), 2)

    def test_cursor_create_and_verify(self):
        """Test cursor tools and corruption detection"""
        path = self.path('run.cursor')
        self.assertEqual(run(['cursor', 'create', '--output', path, '--shard', '2', '--offset', '100', '--seed', '7']), 0)
        self.assertEqual(read_cursor(path), ResumeCursor(0, 2, 100, 7))
        self.assertEqual(run(['cursor', 'verify', '--input', path]), 0)

        with open(path, 'r+b') as f:
            f.seek(10)
            byte = f.read(1)
            f.seek(10)
            f.write(bytes([byte[0] ^ 0xFF]))
        self.assertEqual(run(['cursor', 'verify', '--input', path]), 1)

    def test_cursor_create_out_of_range_is_usage_error(self):
        """Test exit 2 and no file for an epoch of 2**64"""
        path = self.path('run.cursor')
        self.assertEqual(run(['cursor', 'create', '--output', path, '--epoch', str(2 ** 64)]), 2)
        self.assertFalse(os.path.exists(path))
        self.assertEqual(run(['cursor', 'create', '--output', path, '--epoch', str(2 ** 64 - 1)]), 0)
        self.assertEqual(read_cursor(path).epoch, 2 ** 64 - 1)
