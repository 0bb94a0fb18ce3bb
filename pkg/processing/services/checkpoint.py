"""Denoiser checkpoint file ("R3DW").

Layout (little-endian): magic b"R3DW", u16 version, u8 training mode, u16 depth,
u16 embed_dim, u16 width count, u16 widths..., u32 parameter count, then the
parameters as float32 in flat-view order.
"""
import logging
import struct
from pathlib import Path

import numpy as np

from ..exceptions import (ArchitectureMismatchError, FormatError, MissingFileError, ParameterError,
                          UnsupportedVersionError)
from .denoiser import DenoiserArch, DenoiserParams

logger = logging.getLogger(__name__)

MAGIC = b'R3DW'
VERSION = 1
MODES = ('direct', 'residual', 'r3d')


def save_checkpoint(path, params, mode):
    arch = params.arch
    header = MAGIC + struct.pack('<HBHHH', VERSION, MODES.index(mode), arch.depth,
                                 arch.embed_dim, len(arch.widths))
    header += struct.pack(f'<{len(arch.widths)}H', *arch.widths)
    header += struct.pack('<I', len(params))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as fh:
        fh.write(header)
        fh.write(params.flat.astype('<f4').tobytes())
    logger.info(f"Saved checkpoint {path} ({len(params)} parameters, mode {mode})")
    return path


def _take(blob, offset, fmt):
    size = struct.calcsize(fmt)
    if offset + size > len(blob):
        raise FormatError("checkpoint truncated", offset=offset)
    return struct.unpack_from(fmt, blob, offset), offset + size


def load_checkpoint(path, expected_arch=None):
    """Return (DenoiserParams, mode)."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise FormatError("bad checkpoint magic", offset=0)
    (version, mode_code, depth, embed_dim, n_widths), offset = _take(blob, 4, '<HBHHH')
    if version != VERSION:
        raise UnsupportedVersionError(f"checkpoint version {version} is not supported", offset=4)
    if mode_code >= len(MODES):
        raise FormatError(f"unknown training mode code {mode_code}", offset=6)
    widths, offset = _take(blob, offset, f'<{n_widths}H')
    (count,), offset = _take(blob, offset, '<I')

    arch = DenoiserArch(depth=depth, widths=tuple(widths), embed_dim=embed_dim)
    try:
        arch.validate()
    except ParameterError as e:
        raise FormatError(f"invalid architecture header: {e}", offset=7)
    if expected_arch is not None and expected_arch != arch:
        raise ArchitectureMismatchError(f"checkpoint architecture {arch} does not match {expected_arch}")
    params = DenoiserParams(arch)
    if count != len(params):
        raise ArchitectureMismatchError(
            f"checkpoint holds {count} parameters, architecture needs {len(params)}")
    if len(blob) - offset != 4 * count:
        raise FormatError(f"expected {4 * count} payload bytes, found {len(blob) - offset}", offset=offset)
    params.flat[:] = np.frombuffer(blob, dtype='<f4', count=count, offset=offset)
    return params, MODES[mode_code]
