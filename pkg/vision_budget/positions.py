"""
Positional machinery for native-resolution vision tokens: position-embedding
grid interpolation, 2-D rotary embeddings and time-aligned 3-D RoPE indices.
"""

import logging
import struct
from dataclasses import dataclass

import numpy as np

from Keye_Curation.exceptions import FormatError, InvalidInputError

ROPE_BASE = 10000.0
_GRID_HEADER = struct.Struct('<III')

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PosEmbedGrid:
    """rows x cols x dim learnable position embeddings."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or min(values.shape) < 1:
            raise InvalidInputError(f"Position grid must be rows x cols x dim, got shape {values.shape}.")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("Position grid contains non-finite values.")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    @property
    def dim(self):
        return self.values.shape[2]


def _corner_aligned(n_src, n_dst):
    if n_dst == 1 or n_src == 1:
        pos = np.zeros(n_dst)
    else:
        pos = np.arange(n_dst, dtype=np.float64) * (n_src - 1) / (n_dst - 1)
    lo = np.minimum(np.floor(pos).astype(np.intp), n_src - 1)
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, pos - lo


def interpolate_pos_embed(grid, target_rows, target_cols):
    """Channel-wise bilinear resampling with corner alignment; corners are kept exactly."""
    if target_rows < 1 or target_cols < 1:
        raise InvalidInputError(f"Target grid {target_rows}x{target_cols} must be at least 1x1.")
    values = grid.values
    r_lo, r_hi, r_frac = _corner_aligned(grid.rows, target_rows)
    c_lo, c_hi, c_frac = _corner_aligned(grid.cols, target_cols)

    top, bottom = values[r_lo], values[r_hi]
    by_rows = top + r_frac[:, None, None] * (bottom - top)
    left, right = by_rows[:, c_lo], by_rows[:, c_hi]
    return PosEmbedGrid(left + c_frac[None, :, None] * (right - left))


def dump_pos_embed(grid):
    return _GRID_HEADER.pack(grid.rows, grid.cols, grid.dim) + grid.values.astype('<f4').tobytes()


def parse_pos_embed(data):
    """Inverse of dump_pos_embed; the byte length must match the header exactly."""
    if len(data) < _GRID_HEADER.size:
        raise FormatError("Truncated position grid header.")
    rows, cols, dim = _GRID_HEADER.unpack_from(data)
    expected = _GRID_HEADER.size + 4 * rows * cols * dim
    if len(data) != expected:
        raise FormatError(f"Position grid holds {len(data)} bytes, expected {expected}.")
    values = np.frombuffer(data, dtype='<f4', offset=_GRID_HEADER.size).reshape(rows, cols, dim)
    return PosEmbedGrid(values)


def save_pos_embed(grid, path):
    with open(path, 'wb') as f:
        f.write(dump_pos_embed(grid))
    logger.debug(f"Wrote {grid.rows}x{grid.cols}x{grid.dim} position grid to {path}")


def load_pos_embed(path):
    with open(path, 'rb') as f:
        data = f.read()
    try:
        return parse_pos_embed(data)
    except FormatError as exc:
        raise exc.with_context(path=str(path))


def rope2d_rotate(vec, row, col, base=ROPE_BASE):
    """
    Rotate adjacent feature pairs: the first half of the pairs by row angles,
    the second half by column angles, theta_k = pos * base^(-2k / (d/2)).
    """
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0 or vec.size % 4:
        raise InvalidInputError(f"Vector length must be a positive multiple of 4, got {vec.size}.")
    quarter = vec.size // 4
    inv_freq = base ** (-2.0 * np.arange(quarter) / (vec.size / 2))
    angles = np.concatenate([row * inv_freq, col * inv_freq])

    pairs = vec.reshape(-1, 2)
    cos, sin = np.cos(angles), np.sin(angles)
    rotated = np.empty_like(pairs)
    rotated[:, 0] = pairs[:, 0] * cos - pairs[:, 1] * sin
    rotated[:, 1] = pairs[:, 0] * sin + pairs[:, 1] * cos
    return rotated.reshape(-1)


@dataclass(frozen=True)
class TextSegment:
    length: int


@dataclass(frozen=True)
class ImageSegment:
    plan: object


@dataclass(frozen=True)
class VideoSegment:
    plan: object


@dataclass(frozen=True, eq=False)
class RopeIndex3D:
    """(3, N) integer positions: rows are the t, h and w channels."""

    positions: np.ndarray

    @property
    def t(self):
        return self.positions[0]

    @property
    def h(self):
        return self.positions[1]

    @property
    def w(self):
        return self.positions[2]

    def __len__(self):
        return self.positions.shape[1]

    @property
    def next_position(self):
        return int(self.positions.max()) + 1 if len(self) else 0


def _grid_block(start, t_value, grid_h, grid_w):
    rows, cols = np.meshgrid(np.arange(grid_h), np.arange(grid_w), indexing='ij')
    block = np.empty((3, grid_h * grid_w), dtype=np.int64)
    block[0] = t_value
    block[1] = start + rows.ravel()
    block[2] = start + cols.ravel()
    return block


def build_mrope_indices(segments):
    """
    Positions for an interleaved text/image/video sequence.

    Text tokens carry one scalar in all channels. Vision tokens share t
    (the start position for images, start + time index for video frames) and
    take h/w from their grid cell offset by the start. The next segment starts
    at 1 + the running maximum.
    """
    blocks = []
    start = 0
    for segment in segments:
        if isinstance(segment, TextSegment):
            if segment.length < 0:
                raise InvalidInputError("Text segment length cannot be negative.")
            block = np.tile(np.arange(start, start + segment.length, dtype=np.int64), (3, 1))
        elif isinstance(segment, ImageSegment):
            block = _grid_block(start, start, segment.plan.grid_h, segment.plan.grid_w)
        elif isinstance(segment, VideoSegment):
            grid_h, grid_w = segment.plan.frame_grid
            block = np.concatenate(
                [_grid_block(start, start + t, grid_h, grid_w) for t in segment.plan.time_indices],
                axis=1,
            ) if segment.plan.time_indices else np.empty((3, 0), dtype=np.int64)
        else:
            raise InvalidInputError(f"Unknown segment {segment!r}.")
        blocks.append(block)
        if block.size:
            start = int(block.max()) + 1
    positions = np.concatenate(blocks, axis=1) if blocks else np.empty((3, 0), dtype=np.int64)
    return RopeIndex3D(positions)
