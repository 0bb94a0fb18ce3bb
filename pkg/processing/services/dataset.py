"""Synthetic radar/LiDAR BEV pairs and the paired-sample file formats.

A scene is a set of thin bright structures (walls and box outlines) rendered into
the LiDAR-like target y. The radar-like input x is y after dropout, angular
smearing around the sensor, clutter on empty cells and intensity jitter.
"""
import logging
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np

from ..exceptions import FormatError, MissingFileError, ParameterError, UnsupportedVersionError
from .diffusion import PairedSample
from .grid import as_grid
from .imaging import load_grayscale, save_grayscale

logger = logging.getLogger(__name__)

PAIR_MAGIC = b'R3DP'
PAIR_VERSION = 1
PAIR_HEADER = '<HII'

SCENES = ('indoor', 'hallway', 'outdoor')
MIN_SIZE = 32
STRUCTURE_INTENSITY = (0.25, 1.0)
CLUTTER_INTENSITY = (0.05, 0.25)


@dataclass(frozen=True)
class SceneConfig:
    scene: str = 'indoor'
    height: int = 64
    width: int = 64
    walls_min: int = 2
    walls_max: int = 5
    boxes_min: int = 1
    boxes_max: int = 4
    dropout: float = 0.05
    angular_blur: float = 1.0
    smear_gain: float = 0.3
    clutter_density: float = 0.002
    jitter: float = 0.02
    seed: int = 0

    def validate(self, factor=1):
        if self.scene not in SCENES:
            raise ParameterError(f"unknown scene {self.scene!r}, expected one of {SCENES}")
        if self.height < MIN_SIZE or self.width < MIN_SIZE:
            raise ParameterError(f"scene size {self.height}x{self.width} below {MIN_SIZE}")
        if self.height % factor or self.width % factor:
            raise ParameterError(f"scene size {self.height}x{self.width} not divisible by {factor}")
        for name in ('dropout', 'clutter_density', 'smear_gain'):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ParameterError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if self.angular_blur < 0 or self.jitter < 0:
            raise ParameterError("angular_blur and jitter must be >= 0")
        if not (0 <= self.walls_min <= self.walls_max and 0 <= self.boxes_min <= self.boxes_max):
            raise ParameterError("structure count ranges must satisfy 0 <= min <= max")
        if self.walls_max + self.boxes_max == 0:
            raise ParameterError("scene would contain no structures")
        return self


# ---------------------------
# rendering
# ---------------------------
def _intensity(rng):
    return float(rng.uniform(*STRUCTURE_INTENSITY))


def _segment(canvas, rng, p0, p1):
    cv2.line(canvas, (int(p0[0]), int(p0[1])), (int(p1[0]), int(p1[1])), _intensity(rng), 1)


def _box(canvas, rng, max_side):
    h, w = canvas.shape
    side_x, side_y = rng.integers(3, max_side + 1, size=2)
    left = int(rng.integers(1, w - side_x - 1))
    top = int(rng.integers(1, h - side_y - 1))
    cv2.rectangle(canvas, (left, top), (left + int(side_x), top + int(side_y)), _intensity(rng), 1)


def _walls_indoor(canvas, rng, count):
    h, w = canvas.shape
    # the room outline is the first wall, the rest are interior partitions
    inset = rng.integers(1, max(2, min(h, w) // 8), size=4)
    cv2.rectangle(canvas, (int(inset[0]), int(inset[1])),
                  (int(w - 1 - inset[2]), int(h - 1 - inset[3])), _intensity(rng), 1)
    for _ in range(count - 1):
        if rng.random() < 0.5:
            row = rng.integers(h // 4, 3 * h // 4)
            c0, c1 = sorted(rng.integers(0, w, size=2))
            _segment(canvas, rng, (c0, row), (c1, row))
        else:
            col = rng.integers(w // 4, 3 * w // 4)
            r0, r1 = sorted(rng.integers(0, h, size=2))
            _segment(canvas, rng, (col, r0), (col, r1))


def _walls_hallway(canvas, rng, count):
    h, w = canvas.shape
    half = int(rng.integers(w // 8, w // 4))
    center = w // 2 + int(rng.integers(-w // 16, w // 16 + 1))
    for col in (center - half, center + half):
        _segment(canvas, rng, (col, 0), (col, h - 1))
    for _ in range(max(0, count - 2)):
        # doorways and side openings as short cross walls
        row = rng.integers(0, h)
        side = rng.choice([-1, 1])
        start = center + side * half
        _segment(canvas, rng, (start, row), (start + side * int(rng.integers(3, w // 4)), row))


def _walls_outdoor(canvas, rng, count):
    h, w = canvas.shape
    for _ in range(count):
        x0, x1 = rng.integers(0, w, size=2)
        y0, y1 = rng.integers(0, h, size=2)
        _segment(canvas, rng, (x0, y0), (x1, y1))


_WALLS = {'indoor': _walls_indoor, 'hallway': _walls_hallway, 'outdoor': _walls_outdoor}
_BOX_SIDE = {'indoor': 8, 'hallway': 5, 'outdoor': 12}


def render_structures(cfg, rng):
    """LiDAR-like target: thin walls and box outlines with per-structure intensity."""
    canvas = np.zeros((cfg.height, cfg.width), dtype=np.float32)
    walls = int(rng.integers(cfg.walls_min, cfg.walls_max + 1))
    boxes = int(rng.integers(cfg.boxes_min, cfg.boxes_max + 1))
    if walls:
        _WALLS[cfg.scene](canvas, rng, walls)
    for _ in range(boxes):
        _box(canvas, rng, _BOX_SIDE[cfg.scene])
    return canvas.astype(np.float64)


# ---------------------------
# radar degradation
# ---------------------------
def angular_smear(image, blur):
    """Blur along azimuth around a sensor at the bottom-centre of the grid."""
    h, w = image.shape
    center = (w / 2.0, float(h))
    max_radius = float(np.hypot(w / 2.0, h))
    angles = 4 * (h + w)
    polar = cv2.warpPolar(image.astype(np.float32), (h + w, angles), center, max_radius,
                          cv2.WARP_POLAR_LINEAR | cv2.INTER_LINEAR)
    # blur given in pixels at half the maximum radius
    sigma_rows = blur * angles / (np.pi * max_radius)
    ksize = 2 * int(np.ceil(3 * sigma_rows)) + 1
    polar = cv2.GaussianBlur(polar, (1, ksize), sigmaX=0, sigmaY=sigma_rows)
    back = cv2.warpPolar(polar, (w, h), center, max_radius,
                         cv2.WARP_POLAR_LINEAR | cv2.INTER_LINEAR | cv2.WARP_INVERSE_MAP)
    return np.clip(back.astype(np.float64), 0.0, None)


def degrade(y, cfg, rng):
    """Radar-like x from target y: dropout, smear, clutter, jitter, clamp to [0, 1]."""
    keep = rng.random(y.shape) >= cfg.dropout
    x = y * keep
    if cfg.angular_blur > 0 and cfg.smear_gain > 0:
        x = np.maximum(x, cfg.smear_gain * angular_smear(y, cfg.angular_blur))
    clutter = (rng.random(y.shape) < cfg.clutter_density) & (y == 0)
    levels = rng.uniform(*CLUTTER_INTENSITY, size=y.shape)
    x = np.where(clutter, np.maximum(x, levels), x)
    noise = rng.standard_normal(y.shape) * cfg.jitter
    x = np.where(x > 0, x + noise, x)
    return np.clip(x, 0.0, 1.0)


def _float32_exact(values):
    # pair files store float32; keep generated samples representable
    return np.asarray(values, dtype=np.float32).astype(np.float64)


def synth_scene(cfg, rng, frame_id=''):
    y = _float32_exact(render_structures(cfg, rng))
    x = _float32_exact(degrade(y, cfg, rng))
    return PairedSample.from_pair(x, y, frame_id or f"{cfg.scene}_{cfg.seed}")


def scene_for_seed(cfg, seed):
    """One scene fully determined by its seed."""
    cfg = replace(cfg, seed=seed)
    return synth_scene(cfg, np.random.default_rng(seed), f"{cfg.scene}_{seed:05d}")


def split_seeds(seed, n_train, n_test):
    """Train seeds [seed, seed + n_train), test seeds right after."""
    if n_train < 0 or n_test < 0:
        raise ParameterError("split sizes must be >= 0")
    return list(range(seed, seed + n_train)), list(range(seed + n_train, seed + n_train + n_test))


# ---------------------------
# pair files
# ---------------------------
def save_pair(path, sample):
    """"R3DP": magic, u16 version, u32 H, u32 W, then x and y as little-endian float32."""
    x = as_grid(sample.x, 'radar')
    y = as_grid(sample.y, 'lidar')
    if x.shape != y.shape:
        raise ParameterError(f"pair shapes differ: {x.shape} vs {y.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = x.shape
    with open(path, 'wb') as fh:
        fh.write(PAIR_MAGIC + struct.pack(PAIR_HEADER, PAIR_VERSION, h, w))
        fh.write(x.astype('<f4').tobytes())
        fh.write(y.astype('<f4').tobytes())
    return path


def load_pair(path):
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"pair file not found: {path}")
    blob = path.read_bytes()
    if blob[:4] != PAIR_MAGIC:
        raise FormatError("bad pair magic", offset=0)
    header_end = 4 + struct.calcsize(PAIR_HEADER)
    if len(blob) < header_end:
        raise FormatError("pair header truncated", offset=len(blob))
    version, h, w = struct.unpack_from(PAIR_HEADER, blob, 4)
    if version != PAIR_VERSION:
        raise UnsupportedVersionError(f"pair version {version} is not supported", offset=4)
    if h == 0 or w == 0:
        raise FormatError(f"pair dimensions {h}x{w} are empty", offset=6)
    expected = header_end + 8 * h * w
    if len(blob) < expected:
        raise FormatError(f"pair payload truncated, expected {expected} bytes", offset=len(blob))
    if len(blob) > expected:
        raise FormatError(f"{len(blob) - expected} trailing bytes after {h}x{w} pair", offset=expected)
    grids = np.frombuffer(blob, dtype='<f4', offset=header_end).astype(np.float64).reshape(2, h, w)
    return PairedSample.from_pair(grids[0], grids[1], path.stem)


def pair_path(directory, frame_id):
    return Path(directory) / f"{frame_id}.r3dp"


def export_pgm(directory, sample):
    """Write ``<id>_radar.pgm`` and ``<id>_lidar.pgm`` (8-bit)."""
    directory = Path(directory)
    return (save_grayscale(directory / f"{sample.frame_id}_radar.pgm", sample.x),
            save_grayscale(directory / f"{sample.frame_id}_lidar.pgm", sample.y))


def import_pgm(directory, frame_id):
    directory = Path(directory)
    x = load_grayscale(directory / f"{frame_id}_radar.pgm")
    y = load_grayscale(directory / f"{frame_id}_lidar.pgm")
    if x.shape != y.shape:
        raise FormatError(f"PGM pair {frame_id} has mismatched sizes {x.shape} and {y.shape}")
    return PairedSample.from_pair(x, y, frame_id)


def load_directory(directory):
    """Every pair in a directory: .r3dp files, else *_radar.pgm / *_lidar.pgm pairs."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingFileError(f"dataset directory not found: {directory}")
    files = sorted(directory.glob('*.r3dp'))
    if files:
        return [load_pair(p) for p in files]
    ids = sorted(p.name[:-len('_radar.pgm')] for p in directory.glob('*_radar.pgm'))
    if not ids:
        raise MissingFileError(f"no pair files in {directory}")
    return [import_pgm(directory, frame_id) for frame_id in ids]
