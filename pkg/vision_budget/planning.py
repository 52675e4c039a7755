"""
Native-resolution token budgets for images and videos.

Token counts are post-merge: one token per (patch x merge)^2 pixel cell, the
tokens the language decoder sees.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from Keye_Curation.exceptions import ConfigurationError, InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BudgetConfig:
    patch: int = 14
    merge: int = 2
    image_cap: int = 16384
    frame_min: int = 128
    frame_max: int = 768
    video_cap: int = 24576
    tick: float = 0.5
    base_fps: float = 2.0

    def __post_init__(self):
        if self.patch < 1 or self.merge < 1:
            raise ConfigurationError("patch and merge must be at least 1.")
        if self.image_cap < 1:
            raise ConfigurationError("image_cap must be at least 1.")
        if not 1 <= self.frame_min <= self.frame_max <= self.video_cap:
            raise ConfigurationError(
                f"Need 1 <= frame_min <= frame_max <= video_cap, got "
                f"{self.frame_min}, {self.frame_max}, {self.video_cap}."
            )
        if not self.tick > 0 or not math.isfinite(self.tick):
            raise ConfigurationError("tick must be a positive number of seconds.")
        if not self.base_fps > 0 or not math.isfinite(self.base_fps):
            raise ConfigurationError("base_fps must be positive.")

    @property
    def cell(self):
        """Pixel side of one post-merge token."""
        return self.patch * self.merge


DEFAULT_CONFIG = BudgetConfig()


@dataclass(frozen=True)
class ImagePlan:
    out_width: int
    out_height: int
    grid_h: int
    grid_w: int

    @property
    def tokens(self):
        return self.grid_h * self.grid_w


@dataclass(frozen=True)
class VideoPlan:
    timestamps: tuple
    time_indices: tuple
    frame_grid: tuple
    out_width: int
    out_height: int
    effective_fps: float
    stride: int = 1

    @property
    def per_frame_tokens(self):
        return self.frame_grid[0] * self.frame_grid[1]

    @property
    def frames(self):
        return len(self.timestamps)

    @property
    def tokens(self):
        return self.frames * self.per_frame_tokens


def _nearest_cells(length, cell):
    """Nearest whole number of cells, half-up, at least one."""
    return max(1, math.floor(length / cell + 0.5))


def _shrink_to(grid_h, grid_w, cap):
    while grid_h * grid_w > cap:
        if grid_h >= grid_w and grid_h > 1:
            grid_h -= 1
        else:
            grid_w -= 1
    return grid_h, grid_w


def _native_grid(width, height, cfg):
    if not (width >= 1 and height >= 1):
        raise InvalidInputError(f"Image size {width}x{height} must be at least 1x1.")
    return _nearest_cells(height, cfg.cell), _nearest_cells(width, cfg.cell)


def plan_image(width, height, cfg=DEFAULT_CONFIG):
    """
    Round each side to the nearest multiple of patch*merge; when the grid
    exceeds image_cap, scale both sides by sqrt(cap / tokens) and round again.
    """
    grid_h, grid_w = _native_grid(width, height, cfg)
    if grid_h * grid_w > cfg.image_cap:
        scale = math.sqrt(cfg.image_cap / (grid_h * grid_w))
        grid_h = _nearest_cells(height * scale, cfg.cell)
        grid_w = _nearest_cells(width * scale, cfg.cell)
        grid_h, grid_w = _shrink_to(grid_h, grid_w, cfg.image_cap)
    return ImagePlan(grid_w * cfg.cell, grid_h * cfg.cell, grid_h, grid_w)


def _chain_widths(width, height, grid_h):
    """
    Widths visited by the uniform-scale chain while its row count is grid_h.

    The chain is (nearest(height*s), nearest(width*s)) in cells for s > 0; it
    only depends on the aspect ratio and grows one step at a time.
    """
    low = 1 if grid_h == 1 else max(1, (width * (2 * grid_h - 1) + height) // (2 * height))
    high = max(1, -(-(width * (2 * grid_h + 1) + height) // (2 * height)) - 1)
    return low, high


def _largest_scaled_grid(width, height, bound):
    """Largest uniform-scale grid with at most `bound` tokens."""
    best = (1, 1)
    for grid_h in range(1, bound + 1):
        low, high = _chain_widths(width, height, grid_h)
        if grid_h * low > bound:
            break
        grid_w = min(high, bound // grid_h)
        if grid_h * grid_w > best[0] * best[1]:
            best = (grid_h, grid_w)
    return best


def _smallest_scaled_grid(width, height, floor):
    """Smallest uniform-scale grid with at least `floor` tokens."""
    best = None
    for grid_h in range(1, floor + 1):
        low, high = _chain_widths(width, height, grid_h)
        grid_w = max(low, -(-floor // grid_h))
        if grid_w <= high and (best is None or grid_h * grid_w < best[0] * best[1]):
            best = (grid_h, grid_w)
    return best


def _closest_grid(aspect, lo, hi):
    """Grid with lo <= h*w <= hi whose w/h is closest to `aspect` on a log scale."""
    best, best_key = None, None
    for grid_h in range(1, hi + 1):
        w_lo, w_hi = max(1, -(-lo // grid_h)), hi // grid_h
        if w_lo > w_hi:
            continue
        ideal = grid_h * aspect
        for grid_w in (math.floor(ideal), math.ceil(ideal)):
            grid_w = min(max(grid_w, w_lo), w_hi)
            key = (abs(math.log(grid_w / grid_h) - math.log(aspect)), grid_h, grid_w)
            if best_key is None or key < best_key:
                best, best_key = (grid_h, grid_w), key
    return best


def _frame_grid(width, height, cfg, bound):
    """
    Per-frame grid with frame_min <= tokens <= bound.

    The native grid is kept when it fits; otherwise the frame is re-gridded by
    uniform scale, falling back to the closest-aspect grid when the scale chain
    steps over the whole range. The token count never decreases as `bound`
    grows.
    """
    grid_h, grid_w = _native_grid(width, height, cfg)
    lo = cfg.frame_min
    if lo <= grid_h * grid_w <= bound:
        return grid_h, grid_w
    if grid_h * grid_w > bound:
        grid_h, grid_w = _largest_scaled_grid(width, height, bound)
    else:
        grid_h, grid_w = _smallest_scaled_grid(width, height, lo)
    if lo <= grid_h * grid_w <= bound:
        return grid_h, grid_w
    return _closest_grid(width / height, lo, bound)


def temporal_positions(timestamps, tick=DEFAULT_CONFIG.tick):
    """Time index per frame: round(timestamp / tick), half-up."""
    ts = np.asarray(timestamps, dtype=np.float64)
    if ts.size == 0:
        return []
    if np.any(np.diff(ts) < 0):
        raise InvalidInputError("Timestamps must be ascending.")
    return [int(v) for v in np.floor(ts / tick + 0.5)]


def time_alignment_residual(timestamps, time_indices, tick=DEFAULT_CONFIG.tick):
    """Largest |index gap - round(timestamp gap / tick)| over consecutive frames."""
    gaps = np.diff(np.asarray(time_indices, dtype=np.int64))
    expected = np.floor(np.diff(np.asarray(timestamps, dtype=np.float64)) / tick + 0.5)
    return int(np.max(np.abs(gaps - expected))) if gaps.size else 0


def plan_video(duration, width, height, cfg=DEFAULT_CONFIG):
    """
    Plan frames and per-frame tokens for a video.

    Frames are sampled at base_fps from t=0. Per-frame tokens follow the image
    rounding, clamped into [frame_min, frame_max]. Over video_cap, per-frame
    tokens shrink towards frame_min first (re-gridding by uniform scale); if
    frame_min tokens per frame still do not fit, every k-th frame is kept with
    the smallest k that fits.
    """
    if not (isinstance(duration, (int, float)) and math.isfinite(duration) and duration > 0):
        raise InvalidInputError(f"Video duration must be positive, got {duration!r}.")

    frame_count = max(1, math.ceil(Fraction(duration) * Fraction(cfg.base_fps)))
    bound = min(cfg.frame_max, cfg.video_cap // frame_count)
    grid_h, grid_w = _frame_grid(width, height, cfg, max(bound, cfg.frame_min))
    tokens = grid_h * grid_w

    stride = 1
    if frame_count * tokens > cfg.video_cap:
        stride = math.ceil(frame_count * tokens / cfg.video_cap)
        while math.ceil(frame_count / stride) * tokens > cfg.video_cap:
            stride += 1
        logger.debug(f"Thinning {frame_count} frames with stride {stride} at {tokens} tokens/frame")

    timestamps = tuple(i / cfg.base_fps for i in range(0, frame_count, stride))
    return VideoPlan(
        timestamps=timestamps,
        time_indices=tuple(temporal_positions(timestamps, cfg.tick)),
        frame_grid=(grid_h, grid_w),
        out_width=grid_w * cfg.cell,
        out_height=grid_h * cfg.cell,
        effective_fps=len(timestamps) / duration,
        stride=stride,
    )
