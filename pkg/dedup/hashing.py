"""
Perceptual hashing of luminance images.

The hash is the classic 64-bit pHash: resample to 32x32, 2-D DCT-II, keep the
8x8 lowest-frequency block and threshold it against the median of its 63 AC
coefficients.
"""

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn

from Keye_Curation.exceptions import InvalidInputError

HASH_BITS = 64
RESAMPLE_SIZE = 32
LOW_FREQ_SIZE = 8

# DCT coefficients are quantized before thresholding so that flat regions,
# whose AC terms are pure floating-point residue, hash identically everywhere.
COEFFICIENT_DECIMALS = 9


@dataclass(frozen=True, eq=False)
class LumaMatrix:
    """Row-major luminance values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise InvalidInputError(
                f"Luminance matrix must be 2-D with non-zero dimensions, got shape {values.shape}."
            )
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("Luminance matrix contains non-finite values.")
        if values.min() < 0.0 or values.max() > 1.0:
            raise InvalidInputError("Luminance values must lie in [0, 1].")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def from_rows(cls, rows):
        return cls(np.array(rows, dtype=np.float64))

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, LumaMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class PHash64:
    """A 64-bit perceptual hash. Bit 0 is the least significant bit."""

    bits: int

    def __post_init__(self):
        if not 0 <= self.bits < (1 << HASH_BITS):
            raise InvalidInputError(f"Hash value {self.bits!r} does not fit in 64 bits.")

    @property
    def hex(self):
        return f"{self.bits:016x}"

    @classmethod
    def from_hex(cls, text):
        try:
            value = int(text, 16)
        except (TypeError, ValueError):
            raise InvalidInputError(f"Invalid hash hex string {text!r}.")
        if len(text) != 16:
            raise InvalidInputError(f"Hash hex string must have 16 digits, got {len(text)}.")
        return cls(value)

    def __str__(self):
        return self.hex


@dataclass(frozen=True)
class OnesSet:
    """Strictly ascending set-bit positions of a 64-bit hash."""

    positions: tuple = ()

    def __post_init__(self):
        positions = tuple(int(p) for p in self.positions)
        for i, position in enumerate(positions):
            if not 0 <= position < HASH_BITS:
                raise InvalidInputError(f"Position {position} is outside [0, 63].")
            if i and positions[i - 1] >= position:
                raise InvalidInputError("Positions must be strictly ascending.")
        object.__setattr__(self, 'positions', positions)

    @classmethod
    def from_mask(cls, mask):
        return cls(tuple(i for i in range(HASH_BITS) if (mask >> i) & 1))

    @property
    def mask(self):
        value = 0
        for position in self.positions:
            value |= 1 << position
        return value

    def __len__(self):
        return len(self.positions)

    def __iter__(self):
        return iter(self.positions)


def _axis_weights(n_src, n_dst):
    # Half-pixel centres, clamped at the borders.
    pos = (np.arange(n_dst, dtype=np.float64) + 0.5) * (n_src / n_dst) - 0.5
    pos = np.clip(pos, 0.0, n_src - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, pos - lo


def bilinear_resample(values, size=RESAMPLE_SIZE):
    """Resample a 2-D array to size x size. Constant input stays exactly constant."""
    r_lo, r_hi, r_frac = _axis_weights(values.shape[0], size)
    c_lo, c_hi, c_frac = _axis_weights(values.shape[1], size)
    top, bottom = values[r_lo], values[r_hi]
    by_rows = top + r_frac[:, None] * (bottom - top)
    left, right = by_rows[:, c_lo], by_rows[:, c_hi]
    return left + c_frac[None, :] * (right - left)


def compute_phash(image):
    """
    Compute the 64-bit pHash of a luminance matrix.

    Bit i corresponds to coefficient i of the 8x8 low-frequency block in
    row-major order; it is set iff the coefficient strictly exceeds the median
    of the 63 AC coefficients (the DC term is excluded from the median but
    still thresholded against it).
    """
    if not isinstance(image, LumaMatrix):
        image = LumaMatrix(image)

    resampled = bilinear_resample(image.values)
    coefficients = dctn(resampled, type=2, norm='ortho')
    block = np.round(coefficients[:LOW_FREQ_SIZE, :LOW_FREQ_SIZE], COEFFICIENT_DECIMALS).ravel()
    median = np.median(block[1:])

    bits = 0
    for i in np.flatnonzero(block > median):
        bits |= 1 << int(i)
    return PHash64(bits)


def ones_positions(phash):
    """Positions of the set bits of a hash, least significant first."""
    bits = phash.bits if isinstance(phash, PHash64) else int(phash)
    return OnesSet.from_mask(bits)


def hamming_distance(a, b):
    return (a.bits ^ b.bits).bit_count()
