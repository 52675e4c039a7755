import io
import os
import tempfile
from unittest import mock

import numpy as np
from django.test import SimpleTestCase
from rest_framework.utils import json

from Keye_Curation.exceptions import ConfigurationError, FormatError, InvalidInputError
from toolkit.cli import run
from .planning import (
    DEFAULT_CONFIG, BudgetConfig, ImagePlan, VideoPlan, plan_image, plan_video, temporal_positions,
    time_alignment_residual,
)
from .positions import (
    ImageSegment, PosEmbedGrid, TextSegment, VideoSegment, build_mrope_indices, dump_pos_embed,
    interpolate_pos_embed, load_pos_embed, parse_pos_embed, rope2d_rotate, save_pos_embed,
)


class ImagePlanTest(SimpleTestCase):
    """Test cases for native-resolution image planning."""

    def test_exact_multiple(self):
        """Test 448x448 maps to a 16x16 grid"""
        plan = plan_image(448, 448)
        self.assertEqual((plan.grid_h, plan.grid_w), (16, 16))
        self.assertEqual(plan.tokens, 256)
        self.assertEqual((plan.out_width, plan.out_height), (448, 448))

    def test_minimum_cell(self):
        """Test that tiny images get one token"""
        self.assertEqual(plan_image(28, 28).tokens, 1)
        self.assertEqual(plan_image(3, 5).tokens, 1)

    def test_scaled_to_cap(self):
        """Test 8000x8000 is scaled to the 16384 token cap"""
        plan = plan_image(8000, 8000)
        self.assertEqual((plan.grid_h, plan.grid_w), (128, 128))
        self.assertEqual(plan.tokens, 16384)
        self.assertEqual(plan.out_width, 3584)

    def test_rounds_to_nearest_cell(self):
        """Test non-multiple sides round to the nearest cell"""
        plan = plan_image(1920, 1080)
        self.assertEqual((plan.grid_h, plan.grid_w), (39, 69))
        self.assertEqual(plan.out_width % DEFAULT_CONFIG.cell, 0)

    def test_invalid_size(self):
        """Test that zero-sized images are rejected"""
        with self.assertRaises(InvalidInputError):
            plan_image(0, 10)

    def test_image_cap_never_exceeded(self):
        """Test the cap over random sizes"""
        rng = np.random.default_rng(8)
        for width, height in rng.integers(1, 20000, size=(2000, 2)):
            plan = plan_image(int(width), int(height))
            self.assertLessEqual(plan.tokens, DEFAULT_CONFIG.image_cap)
            self.assertGreaterEqual(plan.tokens, 1)

    def test_bad_config(self):
        """Test budget configuration validation"""
        with self.assertRaises(ConfigurationError):
            BudgetConfig(frame_min=800, frame_max=768)
        with self.assertRaises(ConfigurationError):
            BudgetConfig(tick=0)


class VideoPlanTest(SimpleTestCase):
    """Test cases for video frame and token planning."""

    def test_short_video(self):
        """Test a 4 s 448x448 video at 2 fps"""
        plan = plan_video(4, 448, 448)
        self.assertEqual(plan.frames, 8)
        self.assertEqual(plan.per_frame_tokens, 256)
        self.assertEqual(plan.tokens, 2048)
        self.assertEqual(plan.time_indices, tuple(range(8)))
        self.assertEqual(plan.stride, 1)

    def test_long_low_res_video_is_thinned(self):
        """Test frame thinning when the per-frame floor cannot fit"""
        plan = plan_video(1000, 448, 224)
        self.assertEqual(plan.per_frame_tokens, 128)
        self.assertEqual(plan.stride, 11)
        self.assertEqual(plan.frames, 182)
        self.assertEqual(plan.tokens, 23296)
        self.assertEqual(plan.time_indices[:3], (0, 11, 22))

    def test_large_frames_clamped(self):
        """Test that per-frame tokens are clamped to the maximum"""
        plan = plan_video(4, 2048, 1536)
        self.assertEqual(plan.per_frame_tokens, 768)
        self.assertEqual(plan.frame_grid, (24, 32))

    def test_high_resolution_long_video_shrinks_before_thinning(self):
        """Test that per-frame tokens drop to the floor before frames are dropped"""
        plan = plan_video(100, 1920, 1080)
        self.assertEqual(plan.frame_grid, (8, 16))
        self.assertEqual(plan.stride, 2)
        self.assertEqual(plan.frames, 100)
        self.assertEqual(plan.time_indices[:3], (0, 2, 4))

        plan = plan_video(1000, 3840, 2160)
        self.assertEqual(plan.per_frame_tokens, 128)
        self.assertEqual(plan.stride, 11)
        self.assertEqual(plan.frames, 182)

    def test_frames_kept_when_shrinking_suffices(self):
        """Test re-gridding by uniform scale without frame thinning"""
        plan = plan_video(60, 1920, 1080)
        self.assertEqual(plan.frames, 120)
        self.assertEqual(plan.stride, 1)
        self.assertEqual(plan.frame_grid, (10, 19))
        self.assertEqual(plan.tokens, 22800)

    def test_larger_video_cap_never_loses_frames_or_tokens(self):
        """Test monotonicity of frames and per-frame tokens in video_cap"""
        rng = np.random.default_rng(14)
        for _ in range(600):
            duration = float(rng.uniform(0.5, 1200))
            width, height = (int(v) for v in rng.integers(1, 5000, size=2))
            small, large = sorted(int(c) for c in rng.integers(768, 60000, size=2))
            before = plan_video(duration, width, height, BudgetConfig(video_cap=small))
            after = plan_video(duration, width, height, BudgetConfig(video_cap=large))
            self.assertGreaterEqual(after.frames, before.frames)
            self.assertGreaterEqual(after.per_frame_tokens, before.per_frame_tokens)

    def test_small_frames_raised_to_floor(self):
        """Test that per-frame tokens are raised to the minimum"""
        plan = plan_video(2, 56, 56)
        self.assertGreaterEqual(plan.per_frame_tokens, 128)
        self.assertLessEqual(plan.per_frame_tokens, 768)

    def test_invalid_duration(self):
        """Test that durations must be positive"""
        with self.assertRaises(InvalidInputError):
            plan_video(0, 448, 448)
        with self.assertRaises(InvalidInputError):
            plan_video(float('nan'), 448, 448)

    def test_budget_safety(self):
        """Test the per-frame bounds and the video cap over random inputs"""
        rng = np.random.default_rng(9)
        for _ in range(3000):
            duration = float(rng.uniform(0.01, 7200))
            width, height = (int(v) for v in rng.integers(1, 8000, size=2))
            plan = plan_video(duration, width, height)
            self.assertGreaterEqual(plan.per_frame_tokens, DEFAULT_CONFIG.frame_min)
            self.assertLessEqual(plan.per_frame_tokens, DEFAULT_CONFIG.frame_max)
            self.assertLessEqual(plan.tokens, DEFAULT_CONFIG.video_cap)
            self.assertEqual(time_alignment_residual(plan.timestamps, plan.time_indices), 0)


class TemporalPositionTest(SimpleTestCase):
    """Test cases for timestamp to position alignment."""

    def test_examples(self):
        """Test half-second ticks"""
        self.assertEqual(temporal_positions([0, 0.5, 1.0]), [0, 1, 2])
        self.assertEqual(temporal_positions([0, 1, 2]), [0, 2, 4])
        self.assertEqual(temporal_positions([]), [])

    def test_descending_rejected(self):
        """Test that timestamps must ascend"""
        with self.assertRaises(InvalidInputError):
            temporal_positions([1.0, 0.5])


class PositionEmbeddingTest(SimpleTestCase):
    """Test cases for position-embedding interpolation."""

    def setUp(self):
        self.rng = np.random.default_rng(10)

    def test_identity(self):
        """Test that same-size interpolation is the identity"""
        grid = PosEmbedGrid(self.rng.normal(size=(4, 5, 8)))
        np.testing.assert_allclose(interpolate_pos_embed(grid, 4, 5).values, grid.values, atol=1e-6)

    def test_center_is_corner_mean(self):
        """Test 2x2 to 3x3 bilinear interpolation"""
        grid = PosEmbedGrid(self.rng.normal(size=(2, 2, 3)))
        out = interpolate_pos_embed(grid, 3, 3)
        np.testing.assert_allclose(out.values[1, 1], grid.values.mean(axis=(0, 1)), atol=1e-12)

    def test_constant_grid(self):
        """Test that constants stay constant"""
        grid = PosEmbedGrid(np.full((3, 3, 2), 0.25))
        np.testing.assert_allclose(interpolate_pos_embed(grid, 7, 2).values, 0.25)

    def test_binary_round_trip(self):
        """Test the position grid container"""
        grid = PosEmbedGrid(self.rng.normal(size=(2, 3, 4)).astype(np.float32))
        loaded = parse_pos_embed(dump_pos_embed(grid))
        np.testing.assert_array_equal(loaded.values, grid.values)
        with self.assertRaises(FormatError):
            parse_pos_embed(dump_pos_embed(grid)[:-1])

    def test_grid_file(self):
        """Test saving and loading a position grid file"""
        grid = PosEmbedGrid(self.rng.normal(size=(3, 2, 4)).astype(np.float32))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'pos.bin')
            save_pos_embed(grid, path)
            np.testing.assert_array_equal(load_pos_embed(path).values, grid.values)
            with open(path, 'r+b') as f:
                f.truncate(10)
            with self.assertRaises(FormatError) as ctx:
                load_pos_embed(path)
            self.assertEqual(ctx.exception.path, path)


class RopeTest(SimpleTestCase):
    """Test cases for 2-D rotary embeddings and 3-D position indices."""

    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_origin_is_identity(self):
        """Test zero angles at the origin"""
        vec = self.rng.normal(size=16)
        np.testing.assert_allclose(rope2d_rotate(vec, 0, 0), vec)

    def test_norm_preserved(self):
        """Test that rotations are isometries"""
        vec = self.rng.normal(size=32)
        self.assertAlmostEqual(np.linalg.norm(rope2d_rotate(vec, 7, 19)), np.linalg.norm(vec), places=9)

    def test_relative_position(self):
        """Test that scores are unchanged by a shared translation"""
        for _ in range(200):
            q, k = self.rng.normal(size=16), self.rng.normal(size=16)
            (qr, qc), (kr, kc), (dr, dc) = self.rng.integers(0, 500, size=(3, 2)).tolist()
            a = rope2d_rotate(q, qr, qc) @ rope2d_rotate(k, kr, kc)
            b = rope2d_rotate(q, qr + dr, qc + dc) @ rope2d_rotate(k, kr + dr, kc + dc)
            self.assertAlmostEqual(a, b, delta=1e-6)

    def test_bad_length(self):
        """Test that vectors must split into row and column pairs"""
        with self.assertRaises(InvalidInputError):
            rope2d_rotate(np.ones(6), 1, 1)

    def test_text_only(self):
        """Test that text degenerates to 1-D positions"""
        index = build_mrope_indices([TextSegment(3)])
        for channel in (index.t, index.h, index.w):
            self.assertEqual(channel.tolist(), [0, 1, 2])

    def test_image_after_text(self):
        """Test vision token positions and the following text start"""
        plan = ImagePlan(56, 56, 2, 2)
        index = build_mrope_indices([TextSegment(2), ImageSegment(plan), TextSegment(1)])
        self.assertEqual(index.t.tolist(), [0, 1, 2, 2, 2, 2, 4])
        self.assertEqual(index.h.tolist(), [0, 1, 2, 2, 3, 3, 4])
        self.assertEqual(index.w.tolist(), [0, 1, 2, 3, 2, 3, 4])
        self.assertEqual(index.next_position, 5)

    def test_video_frames_follow_time(self):
        """Test that frame t positions follow their time indices"""
        plan = VideoPlan(
            timestamps=(0.0, 1.0), time_indices=(0, 2), frame_grid=(1, 2),
            out_width=56, out_height=28, effective_fps=1.0,
        )
        index = build_mrope_indices([VideoSegment(plan)])
        self.assertEqual(index.t.tolist(), [0, 0, 2, 2])
        self.assertEqual(index.t[2] - index.t[0], 2)


class BudgetCommandTest(SimpleTestCase):
    """Test cases for the budget command."""

    def run_budget(self, *args):
        with mock.patch('sys.stdout', new_callable=io.StringIO) as stdout:
            code = run(['budget', *args])
        return code, stdout.getvalue()

    def test_video_plan_json(self):
        """Test the 4 s video plan output"""
        code, output = self.run_budget('video', '--duration', '4', '--width', '448', '--height', '448')
        self.assertEqual(code, 0)
        plan = json.loads(output)
        self.assertEqual(plan['grid'], [16, 16])
        self.assertEqual(plan['per_frame_tokens'], 256)
        self.assertEqual(plan['frames'], 8)
        self.assertEqual(plan['tokens'], 2048)
        self.assertEqual(plan['time_indices'], list(range(8)))

    def test_image_plan_json(self):
        """Test byte-exact image plan output"""
        code, output = self.run_budget('image', '--width', '448', '--height', '448')
        self.assertEqual(code, 0)
        self.assertEqual(output, '{"out_w":448,"out_h":448,"grid":[16,16],"tokens":256}\n')

    def test_bad_config_is_usage_error(self):
        """Test exit 2 for an inconsistent budget override"""
        code, _ = self.run_budget('image', '--width', '10', '--height', '10', '--frame-min', '1000')
        self.assertEqual(code, 2)

    def test_bad_duration_is_data_error(self):
        """Test exit 1 for a non-positive duration"""
        code, _ = self.run_budget('video', '--duration', '0', '--width', '10', '--height', '10')
        self.assertEqual(code, 1)
