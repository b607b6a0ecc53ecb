"""8-bit RGB image files through Pillow (PNG, or PPM by file suffix)."""

from pathlib import Path

import numpy as np
from PIL import Image

from honeyscope.utils import atomic_write

FORMATS = {
    '.png': 'PNG',
    '.ppm': 'PPM',
}


def save_image(path, pixels):
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8 or pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"Expected an H x W x 3 uint8 image, got {pixels.dtype} {pixels.shape}")
    suffix = Path(path).suffix.lower()
    if suffix not in FORMATS:
        raise ValueError(f"Unsupported image suffix '{suffix}'. Supported: {list(FORMATS)}")
    with atomic_write(path, 'wb') as f:
        Image.fromarray(pixels).save(f, format=FORMATS[suffix])


def load_image(path):
    """H x W x 3 uint8 array."""
    with Image.open(path) as image:
        return np.array(image.convert('RGB'), dtype=np.uint8)
