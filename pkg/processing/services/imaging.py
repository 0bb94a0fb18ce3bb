"""8-bit grayscale export/import of Grid2D images."""
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from ..exceptions import FormatError, MissingFileError
from .grid import as_grid, min_max_normalize

logger = logging.getLogger(__name__)


def to_uint8(grid):
    """Clip to [0, 1] and scale to 0..255."""
    grid = as_grid(grid, 'image')
    return np.rint(np.clip(grid, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_grayscale(path, grid):
    """Write a grid as an 8-bit image; the format follows the suffix (.pgm, .png, ...)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(grid), mode='L').save(path)
    return path


def load_grayscale(path):
    """Read an 8-bit image into a float64 grid in [0, 1] (value / 255)."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"image not found: {path}")
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img.convert('L'), dtype=np.float64)
    except OSError as e:
        raise FormatError(f"unreadable image {path.name}: {e}")
    return pixels / 255.0


def save_trajectory(path, trajectory):
    """Multi-page TIFF of sampler states, each page min-max scaled on its own."""
    if not trajectory:
        return None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pages = [Image.fromarray(to_uint8(min_max_normalize(state)), mode='L') for _, _, state in trajectory]
    pages[0].save(path, format='TIFF', save_all=True, append_images=pages[1:])
    logger.debug(f"Wrote {len(pages)} trajectory pages to {path}")
    return path
