"""Grid2D helpers.

A Grid2D is a plain 2D float64 ndarray; these helpers validate and coerce.
"""
import numpy as np

from ..exceptions import ParameterError


def as_grid(values, name='grid', min_size=1):
    grid = np.asarray(values, dtype=np.float64)
    if grid.ndim != 2:
        raise ParameterError(f"{name} must be 2D, got shape {grid.shape}")
    if grid.shape[0] < min_size or grid.shape[1] < min_size:
        raise ParameterError(
            f"{name} must be at least {min_size}x{min_size}, got {grid.shape[0]}x{grid.shape[1]}")
    if not np.all(np.isfinite(grid)):
        raise ParameterError(f"{name} contains non-finite values")
    return grid


def same_shape(a, b, names=('a', 'b')):
    if np.shape(a) != np.shape(b):
        raise ParameterError(
            f"shape mismatch: {names[0]} {np.shape(a)} vs {names[1]} {np.shape(b)}")


def min_max_normalize(values, degenerate=0.0):
    """Scale to [0, 1]; a flat input maps to ``degenerate`` everywhere."""
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        return np.full(values.shape, degenerate, dtype=np.float64)
    return (values - lo) / (hi - lo)
