"""
Image decoding for the hashing pipeline.
"""

import numpy as np
from PIL import Image, UnidentifiedImageError

from Keye_Curation.exceptions import ImageDecodeError
from dedup.hashing import LumaMatrix

# ITU-R BT.601 luma weights, per mille; integer so white maps to exactly 1.0
LUMA_WEIGHTS = np.array([299, 587, 114], dtype=np.int64)
LUMA_SCALE = 255 * 1000


def decode_image(path):
    """Decode a raster image into a LumaMatrix with values in [0, 1]."""
    try:
        with Image.open(path) as image:
            image.load()
            rgb = np.asarray(image.convert('RGB'), dtype=np.int64)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ImageDecodeError(f"Cannot decode image: {exc}", path=path)
    return LumaMatrix((rgb @ LUMA_WEIGHTS) / LUMA_SCALE)
